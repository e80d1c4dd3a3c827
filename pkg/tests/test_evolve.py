"""Evolution engine: methods agree with each other and with closed forms."""
import numpy as np
import pytest
from scipy.linalg import expm

from qcadc.classical import gamma_p_relation, mv_sublayer_sequence, p_from_gamma_tau
from qcadc.evolve import (
    DiagonalDynamics, EvolutionResult, KrylovError, NotBasisPreservingError,
    continuous_evolve, converge_to_fixed_point, crossing_time,
    diagonal_rate_matrix, discrete_run, is_basis_preserving, krylov_expmv,
    trotter_even_odd,
)
from qcadc.models import (
    DephasingParams, FuksParams, dephasing_lindblad, fuks_kraus_sets,
    fuks_lindblad, fuks_step, mv_consensus_step, mv_lindblads, mv_spread_step,
    published_ml_weights, ml_lindblad,
)
from qcadc.observables import (density_n, diag_probabilities, expval_sz,
                               trace_of)
from qcadc.superop import (
    ID2, P0, P1, SIGMA_MINUS, LindbladSpec, LocalOperator, SuperOp, VecState,
    assemble_lindbladian, devectorize, doubled, vectorize,
)
from conftest import basis_density, random_density


def decay_spec(n=1, gamma=1.0):
    return LindbladSpec(n, (), ((LocalOperator((0,), SIGMA_MINUS), gamma),))


# ---------------------------------------------------------------------------
# discrete stepping


def test_discrete_identity_step_keeps_state(rng):
    import scipy.sparse as sp
    step = SuperOp(2, sp.identity(16, format="csr", dtype=complex), "step")
    state = vectorize(random_density(rng, 2))
    out = discrete_run(step, state, max_steps=7)
    assert np.array_equal(out.final_state.amplitudes, state.amplitudes)
    assert out.time_reached == 7


def test_discrete_run_stop_rule():
    step = fuks_step(FuksParams(0.5), 3)
    state = vectorize(basis_density([0, 1, 0]))
    out = discrete_run(step, state, max_steps=50,
                       stop=lambda prev, cur, k:
                       np.linalg.norm(cur.amplitudes - prev.amplitudes) < 1e-12)
    assert out.converged
    assert out.time_reached < 10


def test_discrete_run_trajectory_columns():
    step = fuks_step(FuksParams(0.3), 3)
    out = discrete_run(step, vectorize(basis_density([0, 0, 1])), max_steps=5)
    assert out.trajectory.shape == (6, 4)
    assert np.all(np.diff(out.trajectory[:, 0]) > 0)
    assert np.allclose(out.trajectory[:, 3], 1.0, atol=1e-8)


def test_mv_schedule_run_spreads_cluster():
    # after the spreading budget no two adjacent ones remain (N=12 cluster)
    from qcadc.classical import has_adjacent_ones
    from qcadc.models import mv_layer_counts
    n = 12
    tau_a, _, _ = mv_layer_counts(n)
    steps = {ph: mv_spread_step(n, ph) for ph in (1, 2, 3)}
    v = vectorize(basis_density([1] * 6 + [0] * 6))
    for phase in mv_sublayer_sequence(tau_a):
        v = steps[phase] @ v
    probs = diag_probabilities(v)
    idx = int(np.argmax(probs))
    assert abs(probs[idx] - 1.0) < 1e-9
    bits = [(idx >> (n - 1 - i)) & 1 for i in range(n)]
    assert not has_adjacent_ones(bits)


# ---------------------------------------------------------------------------
# krylov expmv


def test_krylov_matches_dense_small(rng):
    gen = assemble_lindbladian(fuks_lindblad(FuksParams(0.35), 3))
    v = vectorize(random_density(rng, 3)).amplitudes
    want = expm(gen.dense() * 2.7) @ v
    got = krylov_expmv(gen.matrix, v, 2.7)
    assert np.abs(got - want).max() < 1e-8


def test_krylov_random_spec_agreement(rng):
    for _ in range(5):
        K = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        spec = LindbladSpec(4, (), ((LocalOperator((1, 2), K), 0.5),))
        gen = assemble_lindbladian(spec)
        v = vectorize(random_density(rng, 4)).amplitudes
        want = expm(gen.dense() * 1.3) @ v
        got = krylov_expmv(gen.matrix, v, 1.3)
        assert np.abs(got - want).max() < 1e-8


def test_krylov_t_zero():
    import scipy.sparse as sp
    A = sp.identity(8, format="csr", dtype=complex)
    v = np.arange(8, dtype=complex)
    assert np.array_equal(krylov_expmv(A, v, 0.0), v)


# ---------------------------------------------------------------------------
# diagonal fast path


def test_diagonal_rate_matrix_single_site_decay():
    Q = diagonal_rate_matrix(decay_spec()).toarray()
    assert np.allclose(Q, [[0, 1], [0, -1]])


def test_diagonal_rate_matrix_matches_full_generator_fuks():
    # project the 4^N generator onto the diagonal sector and compare
    from qcadc.observables import diag_indices
    spec = fuks_lindblad(FuksParams(0.3), 3)
    gen = assemble_lindbladian(spec).dense()
    idx = diag_indices(3)
    got = diagonal_rate_matrix(spec).toarray()
    want = gen[np.ix_(idx, idx)].real
    assert np.abs(got - want).max() < 1e-12


def test_diagonal_rate_matrix_column_stochastic():
    for spec in (fuks_lindblad(FuksParams(0.4), 4),
                 ml_lindblad(published_ml_weights(), 4),
                 mv_lindblads(4)[0], mv_lindblads(4)[1]):
        Q = diagonal_rate_matrix(spec).toarray()
        off = Q - np.diag(np.diag(Q))
        assert off.min() >= 0
        assert np.abs(Q.sum(axis=0)).max() < 1e-12


def test_dephasing_is_not_basis_preserving():
    spec = dephasing_lindblad(DephasingParams(), 3)
    assert not is_basis_preserving(spec)
    with pytest.raises(NotBasisPreservingError, match="superposition"):
        diagonal_rate_matrix(spec)


def test_diagonal_and_dense_paths_agree():
    for n in (3, 4, 5):
        for spec in (fuks_lindblad(FuksParams(0.25), n),
                     ml_lindblad(published_ml_weights(), n),
                     mv_lindblads(n)[1]):
            state = vectorize(basis_density([0] * (n - 2) + [1, 1]))
            a = continuous_evolve(spec, state, 5.0, method="dense", samples=4)
            b = continuous_evolve(spec, state, 5.0, method="diagonal",
                                  samples=4)
            assert np.abs(a.final_state.amplitudes
                          - b.final_state.amplitudes).max() < 1e-10


def test_reachable_subspace_matches_full_rate_matrix():
    spec = mv_lindblads(6)[1]
    dyn = DiagonalDynamics(spec)
    bits0 = np.array([0, 1, 1, 0, 1, 0], dtype=np.uint8)
    codes, Qsub = dyn.reachable(bits0)
    Qfull = dyn.rate_matrix().toarray()
    sub = Qfull[np.ix_(codes, codes)]
    assert np.abs(Qsub.toarray() - sub).max() < 1e-12


def test_gillespie_mean_matches_exact_markov():
    # consensus dynamics from a small cluster: sampled mean site occupation
    # agrees with expm on the full rate matrix within Monte-Carlo error
    spec = mv_lindblads(6)[1]
    dyn = DiagonalDynamics(spec)
    bits0 = np.array([1, 1, 0, 0, 0, 0], dtype=np.uint8)
    t_grid = np.linspace(0.0, 4.0, 9)
    rng = np.random.default_rng(123)
    mean = dyn.gillespie_mean_occupancy(bits0, t_grid, 3000, rng)
    Q = dyn.rate_matrix()
    p0 = np.zeros(64)
    p0[int("".join(map(str, bits0)), 2)] = 1.0
    from scipy.linalg import expm as dexpm
    bits_of = np.array([[(s >> (5 - j)) & 1 for j in range(6)] for s in range(64)])
    for ti, t in enumerate(t_grid):
        p = dexpm(Q.toarray() * t) @ p0
        want = p @ bits_of
        assert np.abs(mean[ti] - want).max() < 0.05


# ---------------------------------------------------------------------------
# continuous evolution, methods and examples


def test_continuous_t_zero_identity(rng):
    spec = fuks_lindblad(FuksParams(0.3), 3)
    state = vectorize(random_density(rng, 3))
    out = continuous_evolve(spec, state, 0.0)
    assert np.array_equal(out.final_state.amplitudes, state.amplitudes)


def test_fuks_continuous_steady_state_from_001():
    spec = fuks_lindblad(FuksParams(0.3), 3)
    out = continuous_evolve(spec, vectorize(basis_density([0, 0, 1])), 200.0,
                            method="dense", samples=8)
    probs = diag_probabilities(out.final_state)
    assert abs(probs[0] - 2 / 3) < 1e-6
    assert abs(probs[7] - 1 / 3) < 1e-6


def test_dephasing_continuous_steady_states():
    spec = dephasing_lindblad(DephasingParams(), 3)
    out = continuous_evolve(spec, vectorize(basis_density([0, 0, 1])), 60.0,
                            method="dense", samples=8)
    probs = diag_probabilities(out.final_state)
    for idx in (1, 2, 4):
        assert abs(probs[idx] - 1 / 3) < 1e-6
    out = continuous_evolve(spec, vectorize(basis_density([0, 1, 1])), 60.0,
                            method="dense", samples=8)
    probs = diag_probabilities(out.final_state)
    for idx in (3, 5, 6):
        assert abs(probs[idx] - 1 / 3) < 1e-6


def test_auto_method_selection():
    spec = fuks_lindblad(FuksParams(0.3), 3)
    out = continuous_evolve(spec, vectorize(basis_density([0, 0, 1])), 1.0)
    assert out.method_used == "diagonal"
    from conftest import ghz_density
    out = continuous_evolve(spec, vectorize(ghz_density(3)), 1.0)
    assert out.method_used == "dense"
    spec7 = fuks_lindblad(FuksParams(0.3), 7)
    state7 = vectorize(ghz_density(7))
    out = continuous_evolve(spec7, state7, 0.05, samples=1)
    assert out.method_used == "krylov"


def test_sz_conservation_along_trajectories(rng):
    for make in (lambda n: fuks_lindblad(FuksParams(0.3), n),
                 lambda n: dephasing_lindblad(DephasingParams(0.6), n)):
        spec = make(3)
        for _ in range(6):
            state = vectorize(random_density(rng, 3))
            out = continuous_evolve(spec, state, 100.0, method="dense",
                                    samples=16)
            sz = out.trajectory[:, 2]
            assert np.abs(sz - sz[0]).max() < 1e-8
            assert np.abs(out.trajectory[:, 3] - 1).max() < 1e-8


def test_frozen_neighborhood_channel_matches_continuous():
    # exp(damping generator * t) equals the discrete damping channel with
    # p = (1 - e^{-gamma t}) / 2 as 4x4 superoperator matrices
    for gt in np.linspace(0.1, 3.0, 10):
        p = p_from_gamma_tau(gt)
        gen = assemble_lindbladian(decay_spec()).dense()
        cont = expm(gen * gt)
        kraus = fuks_kraus_sets(p)[(0, 0)]
        disc = sum(doubled(K) for K in kraus)
        assert np.abs(cont - disc).max() < 1e-10


def test_gamma_tau_inverse_of_p():
    for p in (0.1, 0.25, 0.4):
        assert abs(p_from_gamma_tau(gamma_p_relation(p)) - p) < 1e-14


# ---------------------------------------------------------------------------
# trotter splitting


def even_odd_split(spec):
    n = spec.n_sites
    even, odd = [], []
    for op, rate in spec.jumps:
        center = op.sites[1]
        (even if (center + 1) % 2 == 0 else odd).append((op, rate))
    return (LindbladSpec(n, (), tuple(even)), LindbladSpec(n, (), tuple(odd)))


def test_trotter_commuting_parts_exact(rng):
    # single-site decay on different sites commutes: splitting is exact
    n = 2
    full = LindbladSpec(n, (), (
        (LocalOperator((0,), SIGMA_MINUS), 1.0),
        (LocalOperator((1,), SIGMA_MINUS), 0.5)))
    a = LindbladSpec(n, (), (full.jumps[0],))
    b = LindbladSpec(n, (), (full.jumps[1],))
    state = vectorize(random_density(rng, n))
    split = trotter_even_odd(a, b, tau=0.5, n_steps=4, state=state)
    direct = continuous_evolve(full, state, 2.0, method="dense", samples=1)
    assert np.abs(split.final_state.amplitudes
                  - direct.final_state.amplitudes).max() < 1e-10


def test_trotter_first_order_error_scaling(rng):
    spec = fuks_lindblad(FuksParams(0.3), 4)
    even, odd = even_odd_split(spec)
    state = vectorize(random_density(rng, 4))
    direct = continuous_evolve(spec, state, 1.0, method="dense", samples=1)
    errs = []
    for tau in (0.1, 0.05, 0.025):
        split = trotter_even_odd(even, odd, tau=tau,
                                 n_steps=int(round(1.0 / tau)), state=state)
        errs.append(np.abs(split.final_state.amplitudes
                           - direct.final_state.amplitudes).max())
    # first-order splitting: error halves with tau (allow 30% slack)
    assert errs[1] < errs[0] * 0.65
    assert errs[2] < errs[1] * 0.65
    assert errs[0] < 2 * 0.1 * np.abs(assemble_lindbladian(spec).matrix).max()


def test_trotter_small_tau_near_identity(rng):
    spec = fuks_lindblad(FuksParams(0.3), 3)
    even, odd = even_odd_split(spec)
    state = vectorize(random_density(rng, 3))
    tau = 1e-5
    out = trotter_even_odd(even, odd, tau=tau, n_steps=1, state=state)
    bound = 2 * tau * np.abs(assemble_lindbladian(spec).matrix).sum(axis=0).max()
    assert np.abs(out.final_state.amplitudes - state.amplitudes).max() < bound


# ---------------------------------------------------------------------------
# fixed points


def test_converge_immediately_on_steady_input():
    spec = fuks_lindblad(FuksParams(0.3), 3)
    out = converge_to_fixed_point(spec, vectorize(basis_density([0, 0, 0])),
                                  tol=1e-9, horizon=10)
    assert out.converged
    assert out.time_reached <= 1.0


def test_converge_flags_horizon_exceeded():
    spec = fuks_lindblad(FuksParams(0.1), 3)
    out = converge_to_fixed_point(spec, vectorize(basis_density([0, 0, 1])),
                                  tol=1e-14, horizon=2)
    assert not out.converged


def test_converge_diagonal_markov_preserves_sz():
    spec = fuks_lindblad(FuksParams(0.3), 4)
    state = vectorize(basis_density([0, 1, 1, 0]))
    out = converge_to_fixed_point(spec, state, tol=1e-9,
                                  horizon=50 * 16, method="diagonal")
    assert out.converged
    sz = out.trajectory[:, 2]
    assert np.abs(sz - sz[0]).max() < 1e-8


def test_crossing_time():
    t = np.linspace(0, 10, 11)
    v = t / 10
    assert crossing_time(t, v, 0.55) == 6.0
    assert np.isnan(crossing_time(t, v, 2.0))
    assert crossing_time(t, 1 - v, 0.5, "below") == 6.0
