import itertools

import numpy as np
import pytest

from ddcident.ddc import SingleAgentModel, solve_bellman
from ddcident.errors import RankDeficiencyError
from ddcident.games import (
    GameModel,
    build_system,
    expected_objects,
    identified_set_game,
    inequality_region_game,
    pooled_identified_set,
    r2_irrelevance,
    r3_adjustment_cost,
    r3_exchangeability,
    r3_linear,
    r4_monotone_own_lag,
    r4_monotone_rivals,
    recover_game_payoffs,
    rival_probabilities,
    solve_mpe,
)
from ddcident.scenarios import build_entry_game


@pytest.fixture(scope="module")
def game():
    bundle = build_entry_game()
    # tighter than the 1e-10 contract so identities inherit little solver noise
    mpe = solve_mpe(bundle.model, tol=1e-12)
    return bundle, mpe


def small_game(rng, n_firms=2, betas=(0.6, 0.85), interaction=-0.4):
    """A small entry game with separable structure for planted-truth tests."""
    K = 2
    s_values = np.array([1.0, 3.0])
    T = np.array([[0.7, 0.3], [0.4, 0.6]])
    m_x = 2 * K ** n_firms
    n_o = K ** (n_firms - 1)
    payoffs = np.zeros((n_firms, K, n_o, m_x))
    for i in range(n_firms):
        for o in range(n_o):
            n_in = sum(1 for t in range(n_firms - 1) if (o // K ** t) % K == 0)
            for x in range(m_x):
                s_idx, lag = divmod(x, K ** n_firms)
                own_out = (lag // K ** i) % K
                payoffs[i, 0, o, x] = (0.8 * s_values[s_idx] + interaction * n_in
                                       - 0.5 - 0.7 * own_out)
    return GameModel(n_firms=n_firms, n_actions=K, s_values=s_values, s_transition=T,
                     payoffs=payoffs, betas=np.asarray(betas, dtype=float),
                     last_action_known=True)


class TestMpe:
    def test_single_firm_reduces_to_bellman(self):
        rng = np.random.default_rng(0)
        s_values = np.array([0.0, 1.0, 2.0])
        T = rng.random((3, 3)) + 0.2
        T /= T.sum(axis=1, keepdims=True)
        m_x = 3 * 2
        payoffs = np.zeros((1, 2, 1, m_x))
        payoffs[0, 0, 0] = rng.normal(size=m_x)
        gm = GameModel(n_firms=1, n_actions=2, s_values=s_values, s_transition=T,
                       payoffs=payoffs, betas=np.array([0.9]), last_action_known=True)
        mpe = solve_mpe(gm, damping=1.0)
        # equivalent single-agent model on the same state space
        Q = np.zeros((2, m_x, m_x))
        for a in range(2):
            for x in range(m_x):
                s = x // 2
                Q[a, x, np.arange(3) * 2 + a] = T[s]
        sa = SingleAgentModel(u=np.stack([payoffs[0, 0, 0], np.zeros(m_x)]), Q=Q, beta=0.9)
        sol = solve_bellman(sa)
        assert mpe.P[0] == pytest.approx(sol.p, abs=1e-10)

    def test_symmetric_firms_choose_symmetrically(self):
        rng = np.random.default_rng(1)
        gm = small_game(rng, betas=(0.8, 0.8))
        mpe = solve_mpe(gm)
        # swap the two firms: firm 0 at state with lags (a,b) equals firm 1 at (b,a)
        for s in range(2):
            for la, lb in itertools.product(range(2), repeat=2):
                x = s * 4 + la + 2 * lb
                x_swap = s * 4 + lb + 2 * la
                assert mpe.P[0, 0, x] == pytest.approx(mpe.P[1, 0, x_swap], abs=1e-8)

    def test_reference_game_residual_and_determinism(self, game):
        bundle, mpe = game
        assert mpe.residual <= 1e-10
        again = solve_mpe(bundle.model, tol=1e-12)
        assert np.array_equal(again.P, mpe.P)

    def test_columns_sum_to_one_and_positive(self, game):
        _, mpe = game
        assert mpe.P.sum(axis=1) == pytest.approx(1.0, abs=1e-12)
        assert np.all(mpe.P > 0.0)

    def test_logit_inversion_identity_at_equilibrium(self, game):
        _, mpe = game
        # inversion values equal value differences at every state and action
        assert mpe.psi == pytest.approx(mpe.V[:, None, :] - mpe.v, abs=1e-10)

    def test_bad_damping(self, game):
        bundle, _ = game
        with pytest.raises(ValueError):
            solve_mpe(bundle.model, damping=0.0)


class TestExpectedObjects:
    def test_uniform_rivals_make_uniform_profiles(self):
        rng = np.random.default_rng(2)
        gm = small_game(rng)
        P = np.full((2, 2, 8), 0.5)
        pm = rival_probabilities(gm, P, 0)
        assert pm == pytest.approx(0.5)

    def test_rows_sum_to_one(self, game):
        bundle, mpe = game
        for i in range(3):
            pi_star, Q_star, P_minus = expected_objects(bundle.model, mpe.P, i)
            assert Q_star.sum(axis=2) == pytest.approx(1.0, abs=1e-12)
            assert P_minus.sum(axis=1) == pytest.approx(1.0, abs=1e-12)

    def test_expected_payoff_matches_brute_force(self, game):
        bundle, mpe = game
        m = bundle.model
        pi_star, _, _ = expected_objects(m, mpe.P, 1)
        rivals = m.rivals(1)
        for k in range(2):
            for x in range(m.m_x):
                total = 0.0
                for acts in itertools.product(range(2), repeat=2):
                    prob = np.prod([mpe.P[j, acts[t], x] for t, j in enumerate(rivals)])
                    total += prob * m.payoffs[1, k, m.rival_index(1, acts), x]
                assert pi_star[k, x] == pytest.approx(total, abs=1e-12)

    def test_rival_profile_product_property(self, game):
        bundle, mpe = game
        m = bundle.model
        pm = rival_probabilities(m, mpe.P, 0)
        rivals = m.rivals(0)
        for o, acts in m.rival_profiles(0):
            expected = np.prod([mpe.P[j, acts[t], :] for t, j in enumerate(rivals)], axis=0)
            assert pm[:, o] == pytest.approx(expected, abs=1e-14)


class TestBuildSystem:
    def test_beta_zero_slice_is_static_inversion(self, game):
        bundle, mpe = game
        m = bundle.model
        sys0 = build_system(m, mpe, 0)
        pi_star, _, _ = expected_objects(m, mpe.P, 0)
        # at beta = 0 the equations reduce to Pbar pi = -psi_0 + psi_last + pi*_last
        lhs = sys0.Pbar @ m.pi_stack(0)
        rhs = -mpe.psi[0, 0] + mpe.psi[0, 1] + pi_star[1]
        assert lhs == pytest.approx(rhs + (lhs - sys0.rhs_coeffs[:, 0]), abs=1e-9)
        assert sys0.rhs_coeffs[:, 0] == pytest.approx(rhs, abs=1e-9)

    def test_residual_vanishes_at_true_beta_only(self, game):
        bundle, mpe = game
        m = bundle.model
        for i in range(3):
            sys_i = build_system(m, mpe, i)
            pi_true = m.pi_stack(i)
            scale = np.max(np.abs(sys_i.rhs_coeffs))
            good = np.max(np.abs(sys_i.residual_at(pi_true, m.betas[i])))
            bad = np.max(np.abs(sys_i.residual_at(pi_true, 0.5)))
            assert good <= 1e-8 * scale
            assert bad > 1e-4 * scale

    def test_requires_known_last_action(self, game):
        bundle, mpe = game
        m = bundle.model
        undeclared = GameModel(n_firms=3, n_actions=2, s_values=m.s_values,
                               s_transition=m.s_transition, payoffs=m.payoffs,
                               betas=m.betas, last_action_known=False)
        with pytest.raises(ValueError, match="known"):
            build_system(undeclared, mpe, 0)

    def test_determinant_positive_on_unit_interval(self, game):
        bundle, mpe = game
        grid = np.linspace(0.0, 1.0, 1001, endpoint=False)
        for i in range(3):
            sys_i = build_system(bundle.model, mpe, i)
            assert np.all(sys_i.det(grid) > 0.0)


class TestRestrictionRows:
    def test_row_counts(self, game):
        bundle, _ = game
        m = bundle.model
        assert r2_irrelevance(m, 0).shape[0] == 72
        assert r3_exchangeability(m, 0).shape[0] == 6
        assert r3_adjustment_cost(m, 0).shape[0] == 9
        assert r3_linear(m, 0, bundle.designs[0]).shape[0] == 20

    def test_rows_annihilate_true_payoffs(self, game):
        bundle, _ = game
        m = bundle.model
        for i in range(3):
            pi = m.pi_stack(i)
            for rows in (r2_irrelevance(m, i), r3_exchangeability(m, i),
                         r3_adjustment_cost(m, i), r3_linear(m, i, bundle.designs[i])):
                assert np.max(np.abs(rows @ pi)) < 1e-10

    def test_adjustment_cost_detects_interaction(self):
        # an entry cost that scales with rival entrants violates the restriction
        rng = np.random.default_rng(3)
        gm = small_game(rng)
        payoffs = gm.payoffs.copy()
        for o in range(2):
            n_in = 1 - o  # one rival: profile 0 means the rival operates
            for x in range(8):
                lag = x % 4
                own_out = lag % 2
                payoffs[0, 0, o, x] += 0.3 * n_in * own_out
        bent = GameModel(n_firms=2, n_actions=2, s_values=gm.s_values,
                         s_transition=gm.s_transition, payoffs=payoffs,
                         betas=gm.betas, last_action_known=True)
        rows = r3_adjustment_cost(bent, 0)
        assert np.max(np.abs(rows @ bent.pi_stack(0))) > 0.1

    def test_exchangeability_needs_three_firms(self):
        rng = np.random.default_rng(4)
        gm = small_game(rng)
        assert r3_exchangeability(gm, 0).size == 0

    def test_linear_design_shape_guard(self, game):
        bundle, _ = game
        with pytest.raises(ValueError):
            r3_linear(bundle.model, 0, bundle.designs[0][:-1])


class TestIdentifiedSets:
    def test_reference_game_roots(self, game):
        bundle, mpe = game
        m = bundle.model
        expected = {0: 0.8, 1: 0.9, 2: 0.95}
        for i in range(3):
            sys_i = build_system(m, mpe, i)
            for rows in (r3_exchangeability(m, i), r3_linear(m, i, bundle.designs[i])):
                s = identified_set_game(sys_i, rows)
                assert len(s.equality_roots) == 1
                assert s.equality_roots[0] == pytest.approx(expected[i], abs=1e-3)

    def test_polynomials_vanish_at_one(self, game):
        bundle, mpe = game
        from ddcident.games import _system_polys
        sys0 = build_system(bundle.model, mpe, 0)
        polys, _ = _system_polys(sys0, r3_exchangeability(bundle.model, 0), None, "natural")
        for p in polys:
            if not p.is_zero:
                assert abs(p(1.0)) <= 1e-8 * p.max_abs_coeff

    def test_block_selection_invariance(self, game):
        bundle, mpe = game
        sys1 = build_system(bundle.model, mpe, 1)
        rows = r3_exchangeability(bundle.model, 1)
        nat = identified_set_game(sys1, rows, selection="natural")
        qr = identified_set_game(sys1, rows, selection="qr")
        assert nat.equality_roots == pytest.approx(qr.equality_roots, abs=1e-7)

    def test_planted_two_firm_game(self):
        rng = np.random.default_rng(5)
        gm = small_game(rng, betas=(0.55, 0.75))
        mpe = solve_mpe(gm)
        assert mpe.residual <= 1e-10
        for i in range(2):
            sys_i = build_system(gm, mpe, i)
            rows = r3_adjustment_cost(gm, i)
            s = identified_set_game(sys_i, rows)
            if s.equality_roots:
                # the true value is always recovered when content exists
                assert any(abs(r - gm.betas[i]) < 1e-6 for r in s.equality_roots)
            # linear-in-parameters content pins the truth for this game
            cells = 2 * 2 * 2  # o, s, own
            design = []
            from ddcident.games import reduced_cells
            for _pos, _k, o, s_idx, own in reduced_cells(gm, i):
                n_in = 1 - o
                design.append([gm.s_values[s_idx], n_in, 1.0, float(own)])
            s2 = identified_set_game(sys_i, r3_linear(gm, i, np.asarray(design)))
            assert any(abs(r - gm.betas[i]) < 1e-6 for r in s2.equality_roots)

    def test_pooled_mode_intersects(self, game):
        bundle, mpe = game
        m = bundle.model
        sets = []
        for i in range(2):
            sys_i = build_system(m, mpe, i)
            sets.append(identified_set_game(sys_i, r3_exchangeability(m, i)))
        pooled = pooled_identified_set(sets)
        assert pooled.equality_roots == []  # betas differ across firms

    def test_rank_deficiency_detected(self, game):
        bundle, mpe = game
        sys0 = build_system(bundle.model, mpe, 0)
        broken = GameModelPatch(sys0)
        with pytest.raises(RankDeficiencyError):
            identified_set_game(broken, r3_exchangeability(bundle.model, 0))


class GameModelPatch:
    """System wrapper with a duplicated expectation row (rank-deficient stack)."""

    def __init__(self, system):
        Pbar = system.Pbar.copy()
        Pbar[1] = Pbar[0]
        rhs = system.rhs_coeffs.copy()
        rhs[1] = rhs[0]
        self.firm = system.firm
        self.Pbar = Pbar
        self.rhs_coeffs = rhs
        self.det = system.det
        self.R2 = system.R2
        self.psi = system.psi
        self.m_x = system.m_x
        self.m_pi = system.m_pi

    @property
    def X_a(self):
        return np.vstack([self.Pbar, self.R2])

    def Y_a_coeffs(self):
        out = np.zeros((self.m_pi, self.rhs_coeffs.shape[1]))
        out[: self.rhs_coeffs.shape[0]] = self.rhs_coeffs
        return out


class TestRecoveryAndInequalities:
    def test_recovery_at_true_beta(self, game):
        bundle, mpe = game
        m = bundle.model
        for i in range(3):
            sys_i = build_system(m, mpe, i)
            rec = recover_game_payoffs(sys_i, m.betas[i])
            assert np.max(np.abs(rec - m.pi_stack(i))) <= 1e-7

    def test_recovery_at_zero_matches_static_slice(self, game):
        bundle, mpe = game
        m = bundle.model
        sys0 = build_system(m, mpe, 0)
        rec = recover_game_payoffs(sys0, 0.0)
        assert sys0.Pbar @ rec == pytest.approx(sys0.rhs_coeffs[:, 0], abs=1e-8)

    def test_wrong_beta_violates_held_out_row(self, game):
        bundle, mpe = game
        m = bundle.model
        sys0 = build_system(m, mpe, 0)
        rows = r3_exchangeability(m, 0)
        good = np.max(np.abs(rows @ recover_game_payoffs(sys0, m.betas[0])))
        bad = np.max(np.abs(rows @ recover_game_payoffs(sys0, 0.4)))
        assert good < 1e-6
        assert bad > 100.0 * good and bad > 1e-4

    def test_inequality_regions_cover_unit_interval(self, game):
        bundle, mpe = game
        m = bundle.model
        for i in range(3):
            sys_i = build_system(m, mpe, i)
            for rows, c in (r4_monotone_own_lag(m, i), r4_monotone_rivals(m, i)):
                region = inequality_region_game(sys_i, rows, c)
                (lo, hi), = region.inequality_intervals
                assert lo == 0.0
                assert hi >= 0.99

    def test_true_payoffs_satisfy_inequality_rows(self, game):
        bundle, _ = game
        m = bundle.model
        for i in range(3):
            pi = m.pi_stack(i)
            for rows, c in (r4_monotone_own_lag(m, i), r4_monotone_rivals(m, i)):
                assert np.min(rows @ pi - c) >= -1e-12

    def test_vacuous_inequality(self, game):
        bundle, mpe = game
        sys0 = build_system(bundle.model, mpe, 0)
        region = inequality_region_game(sys0, np.zeros((1, sys0.m_pi)))
        assert region.inequality_intervals == [(0.0, 1.0)]

    def test_recover_rejects_bad_beta(self, game):
        bundle, mpe = game
        sys0 = build_system(bundle.model, mpe, 0)
        with pytest.raises(ValueError):
            recover_game_payoffs(sys0, 1.0)


class TestGameSerialization:
    def test_round_trip_value_identical(self, game):
        import json
        from ddcident.games import game_from_dict, game_to_dict
        bundle, mpe = game
        doc = json.loads(json.dumps(game_to_dict(bundle.model), sort_keys=True))
        back = game_from_dict(doc)
        assert np.array_equal(back.payoffs, bundle.model.payoffs)
        assert np.array_equal(back.s_transition, bundle.model.s_transition)
        assert np.array_equal(back.betas, bundle.model.betas)
        assert back.last_action_known

    def test_mpe_solution_serializes(self, game):
        import json
        _, mpe = game
        doc = json.loads(json.dumps(mpe.to_json_dict()))
        assert doc["residual"] <= 1e-10
        assert np.asarray(doc["P"]).shape == (3, 2, 24)


class TestSolverEdges:
    def test_nonconvergence_carries_history(self, game):
        bundle, _ = game
        from ddcident.errors import ConvergenceError
        with pytest.raises(ConvergenceError) as err:
            solve_mpe(bundle.model, tol=1e-14, max_iter=2)
        assert err.value.residual is not None
        assert err.value.history

    def test_custom_start_converges_to_same_equilibrium(self, game):
        bundle, mpe = game
        rng = np.random.default_rng(8)
        start = rng.uniform(0.3, 0.7, size=mpe.P.shape)
        start[:, 1, :] = 1.0 - start[:, 0, :]
        again = solve_mpe(bundle.model, start=start, tol=1e-12)
        assert np.max(np.abs(again.P - mpe.P)) < 1e-9

    def test_bad_start_rejected(self, game):
        bundle, mpe = game
        with pytest.raises(ValueError):
            solve_mpe(bundle.model, start=np.full_like(mpe.P, 0.4))

    def test_inequality_region_with_extra_equality_rows(self, game):
        bundle, mpe = game
        m = bundle.model
        sys0 = build_system(m, mpe, 0)
        R4, c4 = r4_monotone_rivals(m, 0)
        region = inequality_region_game(sys0, R4, c4,
                                        r3=r3_exchangeability(m, 0), selection="qr")
        (lo, hi), = region.inequality_intervals
        assert lo <= 1e-9 and hi >= 0.99
