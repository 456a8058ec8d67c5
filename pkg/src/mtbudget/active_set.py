"""Budgeted active set with an incrementally maintained Gram inverse.

Prediction, projection, insertion and eviction all run in O(B^2) or
better once the inverse is current: insertion borders H^-1 with the
Schur complement of the new column, eviction applies the rank-1
downdate of the deleted row/column.
"""

from __future__ import annotations

import numpy as np

from .errors import BudgetFull, ZeroNormInstance
from .graph import InteractionModel
from .kernels import (KernelSpec, MultitaskInstance, dense_gram,
                      dense_kernel_vector, dense_self_raw)

RIDGE = 1e-10
_SCHUR_MIN = 1e-10


class ActiveSet:
    """Ordered budgeted store of multitask instances plus weights.

    kernel_mode "multitask": Gram entries are M[task_i, task_j] * K'(x_i, x_j)
    and weights are one scalar per entry. kernel_mode "single": Gram entries
    are K'(x_i, x_j), task markers are ignored by projections, and weights
    form a k x |S| matrix (one prediction function per task).
    """

    def __init__(self, budget, dim, spec: KernelSpec, model: InteractionModel,
                 kernel_mode="multitask", maintain_inverse=True):
        if budget < 1:
            raise ValueError("budget must be positive")
        if kernel_mode not in ("multitask", "single"):
            raise ValueError("bad kernel_mode %r" % kernel_mode)
        self.budget = int(budget)
        self.dim = int(dim)
        self.spec = spec
        self.model = model
        self.kernel_mode = kernel_mode
        self.maintain_inverse = maintain_inverse
        self.regularized = False
        self.n = 0
        self._cap = 16
        self._X = np.zeros((self._cap, dim))
        self._tasks = np.zeros(self._cap, dtype=np.int64)
        self._times = np.zeros(self._cap, dtype=np.int64)
        self._self_raw = np.zeros(self._cap)
        self._sq = np.zeros(self._cap)
        self._clock = 0
        if kernel_mode == "single":
            self._W = np.zeros((model.k, self._cap))
        else:
            self._W = np.zeros(self._cap)
        if maintain_inverse:
            self._H = np.zeros((self._cap, self._cap))
            self._Hinv = np.zeros((self._cap, self._cap))
        else:
            self._H = None
            self._Hinv = None
        self._instances = []  # original SparseVectors, for snapshots/audits

    # -- views ---------------------------------------------------------

    @property
    def tasks(self):
        return self._tasks[:self.n]

    @property
    def times(self):
        return self._times[:self.n]

    @property
    def weights(self):
        """Live view; mutate in place, never keep across inserts."""
        if self._W.ndim == 2:
            return self._W[:, :self.n]
        return self._W[:self.n]

    @property
    def gram(self):
        return self._H[:self.n, :self.n]

    @property
    def gram_inv(self):
        return self._Hinv[:self.n, :self.n]

    def instance(self, j) -> MultitaskInstance:
        return MultitaskInstance(self._instances[j], int(self._tasks[j]))

    def __len__(self):
        return self.n

    # -- kernel plumbing ----------------------------------------------

    def _query(self, q: MultitaskInstance, cache=None):
        """Dense row, raw self kernel and squared norm of a query.

        `cache` short-circuits the conversion with a precomputed triple
        (dense row, raw self kernel, squared norm) for hot streaming loops.
        """
        if cache is not None:
            return cache
        x = q.x.to_dense(self.dim)
        q_self = dense_self_raw(x, self.spec)
        if self.spec.normalize and q_self <= 0.0:
            raise ZeroNormInstance("zero-norm query instance")
        return x, q_self, float(np.dot(x, x))

    def kernel_column(self, q: MultitaskInstance, cache=None):
        """Configured-kernel values of q against all stored entries."""
        x, q_self, q_sq = self._query(q, cache)
        if self.n == 0:
            return np.zeros(0)
        col = dense_kernel_vector(self._X[:self.n], self._self_raw[:self.n],
                                  self._sq[:self.n], x, q_self, q_sq, self.spec)
        if self.kernel_mode == "multitask":
            col = col * self.model.inverse[self._tasks[:self.n] - 1, q.task - 1]
        return col

    def self_kernel(self, q: MultitaskInstance):
        """Configured kernel of q with itself (M_qq after normalization)."""
        if self.spec.normalize or self.spec.kind == "gaussian":
            base = 1.0
        else:
            base = dense_self_raw(q.x.to_dense(self.dim), self.spec)
        if self.kernel_mode == "multitask":
            return float(self.model.inverse[q.task - 1, q.task - 1]) * base
        return float(base)

    # -- public operations --------------------------------------------

    def predict(self, q: MultitaskInstance, cache=None) -> float:
        if self.n == 0:
            return 0.0
        x, q_self, q_sq = self._query(q, cache)
        base = dense_kernel_vector(self._X[:self.n], self._self_raw[:self.n],
                                   self._sq[:self.n], x, q_self, q_sq, self.spec)
        if self.kernel_mode == "multitask":
            m = self.model.inverse[self._tasks[:self.n] - 1, q.task - 1]
            return float(np.dot(self._W[:self.n], m * base))
        return float(np.dot(self._W[q.task - 1, :self.n], base))

    def projection(self, q: MultitaskInstance, cache=None):
        """(alphas, residual norm) of q's kernel function onto the span."""
        kqq = self.self_kernel(q)
        if self.n == 0:
            return np.zeros(0), float(np.sqrt(kqq))
        col = self.kernel_column(q, cache)
        alphas = self._Hinv[:self.n, :self.n] @ col
        resid_sq = kqq - float(np.dot(col, alphas))
        return alphas, float(np.sqrt(max(resid_sq, 0.0)))

    def insert(self, q: MultitaskInstance, weight, force=False, cache=None):
        """Append q; `weight` is a scalar or, in single mode, a k-column."""
        if self.n >= self.budget and not force:
            raise BudgetFull("active set already holds %d entries" % self.n)
        x, q_self, q_sq = self._query(q, cache)
        col = self.kernel_column(q, (x, q_self, q_sq))
        kqq = self.self_kernel(q)
        n = self.n
        if n + 1 > self._cap:
            self._grow()
        self._X[n] = x
        self._tasks[n] = q.task
        self._times[n] = self._clock
        self._clock += 1
        self._self_raw[n] = q_self
        self._sq[n] = q_sq
        if self._W.ndim == 2:
            self._W[:, n] = weight
        else:
            self._W[n] = weight
        self._instances.append(q.x)
        if self.maintain_inverse:
            self._H[n, :n] = col
            self._H[:n, n] = col
            self._H[n, n] = kqq
            if n == 0:
                self._Hinv[0, 0] = 1.0 / kqq
            else:
                alpha = self._Hinv[:n, :n] @ col
                delta = kqq - float(np.dot(col, alpha))
                if delta < _SCHUR_MIN:
                    self.n = n + 1
                    self._rebuild_inverse()
                    return
                self._Hinv[:n, :n] += np.outer(alpha, alpha) / delta
                self._Hinv[:n, n] = -alpha / delta
                self._Hinv[n, :n] = -alpha / delta
                self._Hinv[n, n] = 1.0 / delta
        self.n = n + 1

    def evict(self, r):
        """Remove entry r; return its back-projection coefficients gamma.

        gamma has one coefficient per surviving entry, in the surviving
        order. With no maintained inverse the return value is None and the
        removal is a plain deletion.
        """
        n = self.n
        if not (0 <= r < n):
            raise IndexError("evict index %d out of range" % r)
        gammas = None
        if self.maintain_inverse:
            d = self._Hinv[:n, r].copy()
            pivot = d[r]
            gammas = np.delete(-d / pivot, r)
            self._Hinv[:n, :n] -= np.outer(d, d) / pivot
            self._shift_out(self._Hinv, r, n)
            self._shift_out(self._H, r, n)
        keep = np.arange(n) != r
        self._X[:n - 1] = self._X[:n][keep]
        self._tasks[:n - 1] = self._tasks[:n][keep]
        self._times[:n - 1] = self._times[:n][keep]
        self._self_raw[:n - 1] = self._self_raw[:n][keep]
        self._sq[:n - 1] = self._sq[:n][keep]
        if self._W.ndim == 2:
            self._W[:, :n - 1] = self._W[:, :n][:, keep]
        else:
            self._W[:n - 1] = self._W[:n][keep]
        del self._instances[r]
        self.n = n - 1
        return gammas

    def leave_one_out_residuals(self):
        """For each j: distance of entry j's kernel function to the span of
        the others, via residual_j^2 = 1 / (H^-1)_jj."""
        if self.n == 0:
            raise ValueError("empty active set")
        diag = np.diag(self._Hinv[:self.n, :self.n])
        return np.sqrt(1.0 / np.maximum(diag, 1e-300))

    def oldest(self):
        return int(np.argmin(self._times[:self.n]))

    # -- maintenance ---------------------------------------------------

    def _rebuild_inverse(self):
        n = self.n
        G = dense_gram(self._X[:n], self._self_raw[:n], self._sq[:n], self.spec)
        if self.kernel_mode == "multitask":
            Mi = self.model.inverse
            t = self._tasks[:n] - 1
            G = G * Mi[np.ix_(t, t)]
        G = G + RIDGE * np.eye(n)
        self._H[:n, :n] = G
        self._Hinv[:n, :n] = np.linalg.inv(G)
        self.regularized = True

    def _grow(self):
        new_cap = self._cap * 2
        self._X = self._resize2(self._X, (new_cap, self.dim))
        for name in ("_tasks", "_times", "_self_raw", "_sq"):
            arr = getattr(self, name)
            setattr(self, name, self._resize1(arr, new_cap))
        if self._W.ndim == 2:
            self._W = self._resize2(self._W, (self._W.shape[0], new_cap))
        else:
            self._W = self._resize1(self._W, new_cap)
        if self.maintain_inverse:
            self._H = self._resize2(self._H, (new_cap, new_cap))
            self._Hinv = self._resize2(self._Hinv, (new_cap, new_cap))
        self._cap = new_cap

    @staticmethod
    def _resize1(arr, n):
        out = np.zeros(n, dtype=arr.dtype)
        out[:arr.shape[0]] = arr
        return out

    @staticmethod
    def _resize2(arr, shape):
        out = np.zeros(shape, dtype=arr.dtype)
        out[:arr.shape[0], :arr.shape[1]] = arr
        return out

    @staticmethod
    def _shift_out(buf, r, n):
        buf[r:n - 1, :n] = buf[r + 1:n, :n]
        buf[:n - 1, r:n - 1] = buf[:n - 1, r + 1:n]

    # -- serialization -------------------------------------------------

    def to_snapshot(self) -> str:
        """Line format: `B <budget>` then `<task> <weight[,weight...]> <i>:<v> ...`."""
        lines = ["B %d" % self.budget]
        for j in range(self.n):
            if self._W.ndim == 2:
                w = ",".join("%.17g" % v for v in self._W[:, j])
            else:
                w = "%.17g" % self._W[j]
            sv = self._instances[j]
            feats = " ".join("%d:%.17g" % (i, v)
                             for i, v in zip(sv.indices, sv.values))
            lines.append(("%d %s %s" % (self._tasks[j], w, feats)).rstrip())
        return "\n".join(lines) + "\n"
