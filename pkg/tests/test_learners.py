import math

import numpy as np
import pytest

from mtbudget.data import generate_synthetic
from mtbudget.errors import DomainError
from mtbudget.graph import TaskGraph, build_interaction_model
from mtbudget.kernels import (KernelSpec, MultitaskExample, MultitaskInstance,
                              SparseVector, base_kernel, mt_kernel)
from mtbudget.learners import (DEFICIT_FRAC, LearnerConfig, compute_phi,
                               make_learner, mtforg_bound, mtrbp_bound)

SPEC = KernelSpec("linear", normalize=True)


def cfg(algo, graph, **kw):
    kw.setdefault("kernel", SPEC)
    return LearnerConfig(algo, graph, **kw)


def ex(x, task, y):
    return MultitaskExample(MultitaskInstance(SparseVector.from_dense(x), task), y)


def rand_examples(rng, n, d=8, k=3):
    out = []
    for _ in range(n):
        out.append(ex(rng.normal(size=d), int(rng.integers(1, k + 1)),
                      int(rng.choice((-1, 1)))))
    return out


def grid_phi(a, b, C):
    chis = np.arange(1e-4, 1.0 + 1e-12, 1e-4)
    ok = a * chis ** 2 + b * chis <= C + 1e-12
    return float(chis[ok][-1]) if np.any(ok) else None


class TestMtbprj:
    def test_correct_prediction_no_change(self):
        g = TaskGraph.complete(3)
        learner = make_learner(cfg("mtbprj", g, budget=5), 4)
        learner.step(ex([1.0, 0, 0, 0], 1, 1))
        before = learner.active_set.weights.copy()
        out = learner.step(ex([1.0, 0, 0, 0], 1, 1))  # score > 0, same label
        assert not out.mistake and out.action == "none"
        assert np.array_equal(learner.active_set.weights, before)

    def test_first_mistake_inserts_label_weight(self):
        learner = make_learner(cfg("mtbprj", TaskGraph.complete(3), budget=5), 4)
        out = learner.step(ex([0, 1.0, 0, 0], 2, -1))
        assert out.mistake and out.action == "insert"
        assert len(learner.active_set) == 1
        assert learner.active_set.weights[0] == -1.0

    def test_duplicate_goes_to_projection_branch(self):
        learner = make_learner(cfg("mtbprj", TaskGraph.complete(3), budget=5), 4)
        learner.step(ex([1.0, 0, 0, 0], 1, 1))
        out = learner.step(ex([1.0, 0, 0, 0], 1, -1))  # same point, flipped label
        assert out.mistake and out.action == "weight_update_projection"
        assert len(learner.active_set) == 1
        assert learner.active_set.weights[0] == pytest.approx(0.0, abs=1e-9)

    def test_projection_preserves_function(self):
        rng = np.random.default_rng(0)
        g = TaskGraph.complete(3)
        model = build_interaction_model(g)
        learner = make_learner(cfg("mtbprj", g, budget=10, eta=0.5), 4)
        probes = [MultitaskInstance(SparseVector.from_dense(rng.normal(size=4)),
                                    int(rng.integers(1, 4))) for _ in range(100)]
        seen = 0
        for e in rand_examples(rng, 400, d=4):
            before = None
            s = learner.active_set
            if len(s) and e.label * learner.predict_score(e.instance) <= 0:
                _, resid = s.projection(e.instance)
                if resid <= learner.config.eta:
                    before = np.array([s.predict(p) for p in probes])
                    alphas = s.projection(e.instance)[0]
                    kp = np.array([
                        sum(a * mt_kernel(s.instance(j), p, model, SPEC)
                            for j, a in enumerate(alphas)) for p in probes])
            learner.step(e)
            if before is not None:
                seen += 1
                after = np.array([learner.active_set.predict(p) for p in probes])
                assert after == pytest.approx(before + e.label * kp, abs=1e-6)
        assert seen > 0

    def test_eviction_matches_damage_argmin(self):
        rng = np.random.default_rng(1)
        learner = make_learner(cfg("mtbprj", TaskGraph.complete(3), budget=4), 12)
        evictions = 0
        for e in rand_examples(rng, 200, d=12):
            s = learner.active_set
            expect = None
            if (len(s) == 4 and e.label * learner.predict_score(e.instance) <= 0
                    and s.projection(e.instance)[1] > learner.config.eta):
                entries = [s.instance(j) for j in range(4)]
                beta = s.weights.copy()
                # brute-force damage of each candidate over J \ {j} u {t}
                model = learner.model
                cand = entries + [e.instance]
                G = np.array([[mt_kernel(a, b, model, SPEC) for b in cand]
                              for a in cand])
                damages = []
                for j in range(4):
                    idx = [i for i in range(5) if i != j]
                    sub = G[np.ix_(idx, idx)]
                    col = G[idx, j]
                    resid = math.sqrt(max(G[j, j] - col @ np.linalg.solve(sub, col), 0))
                    damages.append(abs(beta[j]) * resid)
                expect = entries[int(np.argmin(damages))]
                survivors_should_drop = expect
            out = learner.step(e)
            if expect is not None:
                evictions += 1
                assert out.action == "insert_evict"
                kept = [learner.active_set.instance(j).x
                        for j in range(len(learner.active_set))]
                assert all(k is not survivors_should_drop.x for k in kept)
        assert evictions > 0

    def test_eta_zero_matches_unbudgeted_perceptron(self):
        rng = np.random.default_rng(2)
        stream, _ = generate_synthetic(3, 8, 500, 0.7, 0.2, seed=3)
        g = TaskGraph.complete(3)
        model = build_interaction_model(g)
        learner = make_learner(cfg("mtbprj", g, budget=10 ** 6, eta=1e-300), stream.d)
        beta, stored = [], []
        mist_ref, mist_got = [], []
        for t, e in enumerate(stream.iter_examples()):
            score = sum(b * mt_kernel(s, e.instance, model, SPEC)
                        for b, s in zip(beta, stored))
            if e.label * score <= 0:
                mist_ref.append(t)
                beta.append(e.label)
                stored.append(e.instance)
            if learner.step(e).mistake:
                mist_got.append(t)
        assert mist_got == mist_ref


class TestMtbprj2:
    def test_insert_column_complete_k3(self):
        learner = make_learner(cfg("mtbprj2", TaskGraph.complete(3), budget=5), 4)
        out = learner.step(ex([0, 1.0, 0, 0], 1, 1))
        assert out.action == "insert"
        assert learner.active_set.weights[:, 0] == pytest.approx([0.5, 0.25, 0.25])

    def test_task_markers_ignored_by_projection(self):
        # Isolated task, feature vector inside the stored span: the
        # task-blind variant projects where the multitask one must insert.
        g = TaskGraph.from_edges(3, [(1, 2)])  # task 3 isolated
        l2 = make_learner(cfg("mtbprj2", g, budget=5), 4)
        l1 = make_learner(cfg("mtbprj", g, budget=5), 4)
        x = [1.0, 0, 0, 0]
        for learner in (l1, l2):
            learner.step(ex(x, 1, 1))
        out2 = l2.step(ex(x, 3, 1))  # score 0 -> mistake; x in span
        out1 = l1.step(ex(x, 3, 1))
        assert out2.action == "weight_update_projection"
        assert out1.action == "insert"

    def test_eviction_score_factorization(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            k = int(rng.integers(1, 11))
            n = int(rng.integers(1, 6))
            W = rng.normal(size=(k, n))
            loo = rng.uniform(0.01, 1.0, size=n)
            factored = loo * np.linalg.norm(W, axis=0)
            direct = np.array([np.linalg.norm(W[:, j] * loo[j]) for j in range(n)])
            assert factored == pytest.approx(direct, abs=1e-12)

    def test_budget_eviction_runs(self):
        rng = np.random.default_rng(5)
        learner = make_learner(cfg("mtbprj2", TaskGraph.complete(3), budget=3), 16)
        actions = set()
        for e in rand_examples(rng, 200, d=16):
            actions.add(learner.step(e).action)
            assert len(learner.active_set) <= 3
        assert "insert_evict" in actions


class TestMtrbp:
    def test_random_eviction_replays_rng(self):
        rng = np.random.default_rng(6)
        seed = 99
        learner = make_learner(cfg("mtrbp", TaskGraph.complete(3), budget=3,
                                   seed=seed), 10)
        oracle = np.random.default_rng(seed)
        for e in rand_examples(rng, 300, d=10):
            s = learner.active_set
            full = len(s) == 3
            pre = [s.instance(j).x for j in range(len(s))] if full else None
            out = learner.step(e)
            if out.mistake and full:
                evicted = int(oracle.integers(3))
                kept = [learner.active_set.instance(j).x for j in range(2)]
                expected_kept = [x for j, x in enumerate(pre) if j != evicted]
                assert kept == expected_kept
            assert len(learner.active_set) <= 3

    def test_weight_is_label_below_budget(self):
        learner = make_learner(cfg("mtrbp", TaskGraph.complete(2), budget=5), 4)
        out = learner.step(ex([1.0, 0, 0, 0], 1, -1))
        assert out.action == "insert"
        assert learner.active_set.weights[0] == -1.0


class TestComputePhi:
    def test_unconstrained_maximum(self):
        phi, psi = compute_phi(0.1, 1, 0.0, 0.0, 100, 0.7)
        assert phi == 1.0

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(2000):
            cG = rng.uniform(0.2, 1.0)
            beta_r = rng.normal()
            y_r = int(rng.choice((-1, 1)))
            f_r = rng.normal()
            M = int(rng.integers(1, 50))
            cap = DEFICIT_FRAC * cG * cG * M
            Q = rng.uniform(0, cap)
            a = cG ** 2 * beta_r ** 2 - 2 * beta_r ** 2 * y_r * f_r
            b = 2 * cG * beta_r * y_r
            ref = grid_phi(a, b, cap - Q)
            if ref is None:
                continue
            phi, psi = compute_phi(beta_r, y_r, f_r, Q, M, cG)
            assert abs(phi - ref) <= 1e-4
            assert Q + psi <= cap
            checked += 1
        assert checked > 1500

    def test_boundary_deficit(self):
        # Q exactly at cap: only chi with nonpositive penalty are feasible.
        cG, M = 0.7, 10
        cap = DEFICIT_FRAC * cG * cG * M
        beta_r, y_r, f_r = 0.5, 1, 2.0  # a < 0, b > 0
        a = cG ** 2 * beta_r ** 2 - 2 * beta_r ** 2 * y_r * f_r
        b = 2 * cG * beta_r * y_r
        phi, psi = compute_phi(beta_r, y_r, f_r, cap, M, cG)
        ref = grid_phi(a, b, 0.0)
        assert abs(phi - ref) <= 1e-4
        assert cap + psi <= cap + 1e-15


class TestMtforg:
    def test_below_budget_is_perceptron(self):
        rng = np.random.default_rng(8)
        stream, _ = generate_synthetic(3, 8, 400, 0.7, 0.2, seed=9)
        g = TaskGraph.complete(3)
        forg = make_learner(cfg("mtforg", g, budget=10 ** 6), stream.d)
        rbp = make_learner(cfg("mtrbp", g, budget=10 ** 6), stream.d)
        for e in stream.iter_examples():
            assert forg.step(e).mistake == rbp.step(e).mistake
        assert forg.deficit == 0.0

    def test_full_budget_shrink_and_deficit(self):
        rng = np.random.default_rng(10)
        g = TaskGraph.complete(3)
        learner = make_learner(cfg("mtforg", g, budget=4), 10)
        cG = learner.model.cG
        shrinks = 0
        for e in rand_examples(rng, 300, d=10):
            s = learner.active_set
            pre = None
            if len(s) == 4 and e.label * learner.predict_score(e.instance) <= 0:
                oldest = s.oldest()
                pre = dict(beta_r=float(s.weights[oldest]),
                           y_r=learner._labels[oldest],
                           f_r=s.predict(s.instance(oldest)),
                           weights=s.weights.copy(),
                           Q=learner.deficit, M=learner.mistakes,
                           first=s.instance(oldest).x)
            out = learner.step(e)
            if pre is not None:
                shrinks += 1
                assert out.action == "insert_evict_shrink"
                phi, psi = compute_phi(pre["beta_r"], pre["y_r"], pre["f_r"],
                                       pre["Q"], pre["M"] + 1, cG)
                s = learner.active_set
                # oldest dropped, newcomer got y*phi, survivors scaled by phi
                assert all(s.instance(j).x is not pre["first"] for j in range(4))
                survivors = pre["weights"][1:] * phi
                assert s.weights[:3] == pytest.approx(survivors, abs=1e-12)
                assert s.weights[3] == pytest.approx(e.label * phi, abs=1e-12)
                assert learner.deficit == pytest.approx(pre["Q"] + psi, abs=1e-12)
            assert learner.deficit <= DEFICIT_FRAC * cG * cG * learner.mistakes
            assert len(learner.active_set) <= 4
        assert shrinks > 0

    def test_small_budget_warns(self):
        with pytest.warns(UserWarning):
            cfg("mtforg", TaskGraph.complete(2), budget=10)


class TestBattery:
    def test_mistake_appends_to_task_expansion(self):
        learner = make_learner(cfg("perceptron_battery", TaskGraph.edgeless(2)), 4)
        out = learner.step(ex([1.0, 0, 0, 0], 2, 1))
        assert out.mistake and learner.active_size == 1
        assert learner._count[1] == 1 and learner._count[0] == 0

    def test_matches_unbudgeted_mtrbp_on_edgeless_graph(self):
        stream, _ = generate_synthetic(2, 6, 300, 0.5, 0.2, seed=12)
        g = TaskGraph.edgeless(2)
        battery = make_learner(cfg("perceptron_battery", g), stream.d)
        rbp = make_learner(cfg("mtrbp", g, budget=10 ** 6), stream.d)
        for e in stream.iter_examples():
            a, b = battery.step(e), rbp.step(e)
            assert a.mistake == b.mistake
            assert a.score == pytest.approx(b.score, abs=1e-9)


class TestBudgetRespected:
    @pytest.mark.parametrize("algo", ["mtbprj", "mtbprj2", "mtrbp", "mtforg"])
    @pytest.mark.parametrize("budget", [5, 20])
    def test_size_cap(self, algo, budget):
        rng = np.random.default_rng(13)
        learner = make_learner(cfg(algo, TaskGraph.complete(3), budget=budget), 10)
        for e in rand_examples(rng, 500, d=10):
            learner.step(e)
            assert len(learner.active_set) <= budget


class TestSingleTaskReduction:
    """k = 1 collapses the multitask kernel to the base kernel; each learner
    must match an independently coded single-task ancestor."""

    def _stream(self, n=300, d=6, seed=14):
        stream, _ = generate_synthetic(1, d, n, 1.0, 0.2, seed=seed)
        return stream

    def test_mtrbp_matches_scalar_rbp(self):
        stream = self._stream()
        learner = make_learner(cfg("mtrbp", TaskGraph.edgeless(1), budget=7,
                                   seed=3), stream.d)
        rng = np.random.default_rng(3)
        X, w = [], []
        for t, e in enumerate(stream.iter_examples()):
            x = e.instance.x.to_dense(stream.d)
            x = x / np.linalg.norm(x)
            score = sum(wi * float(xi @ x) for wi, xi in zip(w, X))
            if e.label * score <= 0:
                if len(X) >= 7:
                    r = int(rng.integers(7))
                    del X[r], w[r]
                X.append(x)
                w.append(e.label)
            got = learner.step(e)
            assert got.score == pytest.approx(score, abs=1e-9)

    def test_mtbprj_matches_scalar_budget_projectron(self):
        stream = self._stream(seed=15)
        eta = 0.3
        learner = make_learner(cfg("mtbprj", TaskGraph.edgeless(1), budget=5,
                                   eta=eta), stream.d)
        X, beta = [], []
        for e in stream.iter_examples():
            x = e.instance.x.to_dense(stream.d)
            x = x / np.linalg.norm(x)
            y = e.label
            kv = np.array([float(xi @ x) for xi in X])
            score = float(np.dot(beta, kv)) if X else 0.0
            assert learner.step(e).score == pytest.approx(score, abs=1e-6)
            if y * score <= 0:
                if X:
                    G = np.array([[float(a @ b) for b in X] for a in X])
                    al = np.linalg.solve(G, kv)
                    resid = math.sqrt(max(1.0 - kv @ al, 0.0))
                else:
                    al, resid = np.zeros(0), 1.0
                if resid <= eta:
                    beta = list(np.array(beta) + y * al)
                elif len(X) < 5:
                    X.append(x)
                    beta.append(y)
                else:
                    cand = X + [x]
                    cb = beta + [y]
                    G = np.array([[float(a @ b) for b in cand] for a in cand])
                    loo = []
                    for j in range(5):
                        idx = [i for i in range(6) if i != j]
                        sub, col = G[np.ix_(idx, idx)], G[idx, j]
                        loo.append(math.sqrt(max(
                            G[j, j] - col @ np.linalg.solve(sub, col), 0.0)))
                    r = int(np.argmin(np.abs(np.array(beta)) * np.array(loo)))
                    idx = [i for i in range(6) if i != r]
                    sub, col = G[np.ix_(idx, idx)], G[idx, r]
                    gam = np.linalg.solve(sub, col)
                    br = cb[r]
                    X = [cand[i] for i in idx]
                    cb = [cb[i] for i in idx]
                    beta = list(np.array(cb) + br * gam)

    def test_mtforg_matches_scalar_forgetron(self):
        stream = self._stream(seed=16)
        B = 6
        learner = make_learner(cfg("mtforg", TaskGraph.edgeless(1), budget=B),
                               stream.d)
        X, w, labels = [], [], []
        Q, M = 0.0, 0
        for e in stream.iter_examples():
            x = e.instance.x.to_dense(stream.d)
            x = x / np.linalg.norm(x)
            y = e.label
            score = sum(wi * float(xi @ x) for wi, xi in zip(w, X))
            assert learner.step(e).score == pytest.approx(score, abs=1e-9)
            if y * score <= 0:
                M += 1
                if len(X) < B:
                    X.append(x)
                    w.append(y)
                    labels.append(y)
                else:
                    br, yr = w[0], labels[0]
                    fr = sum(wi * float(xi @ X[0]) for wi, xi in zip(w, X))
                    a = br ** 2 - 2 * br ** 2 * yr * fr  # cG = 1 at k = 1
                    b = 2 * br * yr
                    phi = grid_phi(a, b, DEFICIT_FRAC * M - Q)
                    X = X[1:] + [x]
                    w = w[1:] + [y]
                    labels = labels[1:] + [y]
                    # learner's closed form within grid resolution
                    got_w = learner.active_set.weights
                    ratio = got_w[-1] / y
                    assert abs(ratio - phi) <= 2e-4
                    w = [wi * ratio for wi in w]
                    Q += a * ratio ** 2 + b * ratio


class TestBounds:
    def test_mtrbp_reference_value(self):
        assert mtrbp_bound(0.0, 0.5, 0.0, 100, 0.5) == pytest.approx(587.66, abs=0.01)

    def test_mtrbp_small_epsilon_limit(self):
        assert mtrbp_bound(42.0, 0.5, 0.0, 100, 1e-12) == pytest.approx(42.0, abs=1e-6)

    def test_mtrbp_monotone_in_budget(self):
        vals = [mtrbp_bound(0.0, 0.5, 0.0, B, 0.3) for B in (10, 50, 100, 500)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_mtrbp_domain(self):
        for eps in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DomainError):
                mtrbp_bound(0.0, 0.5, 0.0, 100, eps)
        with pytest.warns(UserWarning):
            mtrbp_bound(0.0, 0.5, 0.0, 2, 0.5)

    def test_mtforg_reference_values(self):
        assert mtforg_bound(0.0, 100) == pytest.approx(10.94, abs=0.01)
        assert mtforg_bound(5.0, 100) == pytest.approx(30.94, abs=0.01)

    def test_mtforg_domain(self):
        with pytest.raises(DomainError):
            mtforg_bound(0.0, 83)
