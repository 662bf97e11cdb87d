import numpy as np
import pytest

from swerexi.errors import ConfigurationError, SolverError
from swerexi.solvers import (
    ShiftedLinearSolver,
    ShiftedSolveSpec,
    dense_operator_matrix,
    get_solver,
    mode_index_map,
    pack_stacked,
    solve_l_shifted,
    solve_lg_shifted,
    unpack_stacked,
)
from swerexi.sphere import SphereConfig
from swerexi.swe import LC, LG, L, ModelParams, PrognosticState, tendency_group
from swerexi.rexi import coeffs_for_contour, shifted_contour_from_points

CFG21 = SphereConfig.for_truncation(21)
PAR21 = ModelParams(1e4 * CFG21.gravity_g, CFG21)
CFG10 = SphereConfig.for_truncation(10)
PAR10 = ModelParams(1e4 * CFG10.gravity_g, CFG10)


def random_stack(trunc, rng, m0_real=True, physical=True):
    """Random coefficients; by default scaled like a physical state
    (phi' ~ 1e3 m^2/s^2, vorticity/divergence ~ 1e-5 1/s)."""
    n = trunc + 1
    l = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    s = rng.standard_normal((3, n, n)) + 1j * rng.standard_normal((3, n, n))
    s[:, m > l] = 0.0
    if m0_real:
        s[:, :, 0] = s[:, :, 0].real
    if physical:
        s *= np.array([1e3, 1e-5, 1e-5])[:, None, None]
    return s.astype(np.complex128)


def apply_tendency_complex(group, stacked, params, dt, alpha):
    """Independent forward operator: (dt*L + alpha) x via the tendency path,
    complexified by splitting x into elementwise real and imaginary parts."""
    xr = PrognosticState.from_stack(stacked.real.astype(np.complex128), params.cfg)
    xi = PrognosticState.from_stack(stacked.imag.astype(np.complex128), params.cfg)
    lx = tendency_group(group, xr, params).stack() + 1j * tendency_group(
        group, xi, params
    ).stack()
    return dt * lx + alpha * stacked


def contour_alphas(n=8):
    coeffs = coeffs_for_contour("psi0", shifted_contour_from_points(10.0, 30.0, 128))
    idx = np.linspace(0, 127, n).astype(int)
    return coeffs.alphas[idx]


def test_identity_limit_small_dt():
    rng = np.random.default_rng(0)
    b = PrognosticState.from_stack(random_stack(21, rng), CFG21)
    spec = ShiftedSolveSpec(LG, 1e-30, 1.0 + 0.0j, PAR21)
    x = solve_lg_shifted(spec, b)
    assert np.max(np.abs(x.stack() - b.stack())) < 1e-12 * np.max(np.abs(b.stack()))


def test_vorticity_decouples_in_lg():
    b = PrognosticState.zeros(CFG21)
    b.vort.coeffs[5, 2] = 3.0 + 1.0j
    spec = ShiftedSolveSpec(LG, 600.0, 2.0j, PAR21)
    x = solve_lg_shifted(spec, b)
    assert abs(x.vort.coeffs[5, 2] - (3.0 + 1.0j) / 2.0j) < 1e-15
    assert np.max(np.abs(x.phi_pert.coeffs)) == 0.0
    assert np.max(np.abs(x.div.coeffs)) == 0.0


def test_lg_residual_against_tendency_path():
    rng = np.random.default_rng(1)
    for alpha in contour_alphas(5):
        b = random_stack(21, rng)
        spec = ShiftedSolveSpec(LG, 480.0, complex(alpha), PAR21)
        x = solve_lg_shifted(spec, PrognosticState.from_stack(b, CFG21)).stack()
        resid = apply_tendency_complex(LG, x, PAR21, 480.0, complex(alpha)) - b
        assert np.max(np.abs(resid)) <= 1e-12 * np.max(np.abs(b))


def test_l_solver_matches_lg_when_rotation_off():
    cfg = SphereConfig.for_truncation(21, omega=0.0)
    par = ModelParams(1e4 * cfg.gravity_g, cfg)
    rng = np.random.default_rng(2)
    b = random_stack(21, rng)
    alpha = 1.3 - 0.8j
    x_l = solve_l_shifted(
        ShiftedSolveSpec(L, 480.0, alpha, par), PrognosticState.from_stack(b, cfg)
    ).stack()
    x_lg = solve_lg_shifted(
        ShiftedSolveSpec(LG, 480.0, alpha, par), PrognosticState.from_stack(b, cfg)
    ).stack()
    assert np.max(np.abs(x_l - x_lg)) <= 1e-13 * np.max(np.abs(x_lg))


def test_l_residual_against_tendency_path():
    """Primary correctness gate: the banded Coriolis matrix must reproduce
    the independently implemented grid-space tendency operator."""
    rng = np.random.default_rng(3)
    for alpha in contour_alphas(4):
        b = random_stack(21, rng)
        spec = ShiftedSolveSpec(L, 480.0, complex(alpha), PAR21)
        x = solve_l_shifted(spec, PrognosticState.from_stack(b, CFG21)).stack()
        resid = apply_tendency_complex(L, x, PAR21, 480.0, complex(alpha)) - b
        assert np.max(np.abs(resid)) <= 1e-10 * np.max(np.abs(b))


def test_residuals_on_twenty_random_pairs():
    rng = np.random.default_rng(4)
    alphas = contour_alphas(20)
    for alpha in alphas:
        b = random_stack(21, rng)
        x = solve_lg_shifted(
            ShiftedSolveSpec(LG, 480.0, complex(alpha), PAR21),
            PrognosticState.from_stack(b, CFG21),
        ).stack()
        r = apply_tendency_complex(LG, x, PAR21, 480.0, complex(alpha)) - b
        assert np.max(np.abs(r)) <= 1e-12 * np.max(np.abs(b))
        x2 = solve_l_shifted(
            ShiftedSolveSpec(L, 480.0, complex(alpha), PAR21),
            PrognosticState.from_stack(b, CFG21),
        ).stack()
        r2 = apply_tendency_complex(L, x2, PAR21, 480.0, complex(alpha)) - b
        assert np.max(np.abs(r2)) <= 1e-10 * np.max(np.abs(b))


def test_dense_oracle_structure_lg_T3():
    cfg = SphereConfig.for_truncation(3)
    par = ModelParams(1e4 * cfg.gravity_g, cfg)
    dt = 100.0
    mat = dense_operator_matrix(LG, dt, par, 3)
    modes = mode_index_map(3)
    for i, (l, m) in enumerate(modes):
        kappa = l * (l + 1) / cfg.radius_a**2
        blk = mat[3 * i : 3 * i + 3, 3 * i : 3 * i + 3]
        expected = dt * np.array(
            [
                [0.0, 0.0, -par.mean_geopotential],
                [0.0, 0.0, 0.0],
                [kappa, 0.0, 0.0],
            ]
        )
        assert np.max(np.abs(blk - expected)) < 1e-9 * dt * par.mean_geopotential
    off = mat.copy()
    for i in range(len(modes)):
        off[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = 0.0
    assert np.max(np.abs(off)) < 1e-12 * np.max(np.abs(mat))


def test_dense_matrix_additivity():
    mats = {
        g: dense_operator_matrix(g, 50.0, PAR10, 10) for g in (LG, LC, L)
    }
    assert np.max(np.abs(mats[L] - (mats[LG] + mats[LC]))) == 0.0


def test_solve_l_agrees_with_dense_lu_oracle():
    dt = 300.0
    mat = dense_operator_matrix(L, dt, PAR10, 10)
    n = mat.shape[0]
    rng = np.random.default_rng(5)
    for alpha in contour_alphas(6):
        b = random_stack(10, rng)
        bp = pack_stacked(b)
        x_dense = np.linalg.solve(mat + complex(alpha) * np.eye(n), bp)
        x_band = solve_l_shifted(
            ShiftedSolveSpec(L, dt, complex(alpha), PAR10),
            PrognosticState.from_stack(b, CFG10),
        ).stack()
        diff = np.max(np.abs(pack_stacked(x_band) - x_dense))
        assert diff <= 1e-9 * np.max(np.abs(x_dense))


def test_large_real_shift_neumann_series():
    dt = 100.0
    mat = dense_operator_matrix(L, dt, PAR10, 10)
    norm = np.linalg.norm(mat, 2)
    alpha = 50.0 * norm
    rng = np.random.default_rng(6)
    b = random_stack(10, rng)
    bp = pack_stacked(b)
    x = pack_stacked(
        solve_l_shifted(
            ShiftedSolveSpec(L, dt, complex(alpha), PAR10),
            PrognosticState.from_stack(b, CFG10),
        ).stack()
    )
    # x ~ b/alpha with relative error O((|dt L|/alpha)^2)
    ratio = norm / alpha
    lead = np.linalg.norm(x - bp / alpha) / np.linalg.norm(bp / alpha)
    assert lead <= 2.0 * ratio
    neumann2 = bp / alpha - mat @ bp / alpha**2
    second = np.linalg.norm(x - neumann2) / np.linalg.norm(bp / alpha)
    assert second <= 4.0 * ratio**2


def test_conjugation_symmetry():
    rng = np.random.default_rng(7)
    b = random_stack(21, rng)
    alpha = 0.9 + 2.3j
    x = solve_lg_shifted(
        ShiftedSolveSpec(LG, 480.0, alpha, PAR21), PrognosticState.from_stack(b, CFG21)
    ).stack()
    xc = solve_lg_shifted(
        ShiftedSolveSpec(LG, 480.0, np.conj(alpha), PAR21),
        PrognosticState.from_stack(np.conj(b), CFG21),
    ).stack()
    assert np.max(np.abs(xc - np.conj(x))) <= 1e-13 * np.max(np.abs(x))
    # Coriolis-inclusive operator: the identity holds on the zonal (m=0)
    # block, whose spectral matrix is real
    bz = b.copy()
    bz[:, :, 1:] = 0.0
    xz = solve_l_shifted(
        ShiftedSolveSpec(L, 480.0, alpha, PAR21), PrognosticState.from_stack(bz, CFG21)
    ).stack()
    xzc = solve_l_shifted(
        ShiftedSolveSpec(L, 480.0, np.conj(alpha), PAR21),
        PrognosticState.from_stack(np.conj(bz), CFG21),
    ).stack()
    assert np.max(np.abs(xzc - np.conj(xz))) <= 1e-13 * np.max(np.abs(xz))


def test_linearity_in_rhs():
    rng = np.random.default_rng(8)
    b1 = random_stack(21, rng)
    b2 = random_stack(21, rng)
    spec = ShiftedSolveSpec(L, 480.0, 1.0 + 1.0j, PAR21)
    lhs = solve_l_shifted(
        spec, PrognosticState.from_stack(2.0 * b1 - 0.5j * b2, CFG21)
    ).stack()
    rhs = 2.0 * solve_l_shifted(spec, PrognosticState.from_stack(b1, CFG21)).stack() \
        - 0.5j * solve_l_shifted(spec, PrognosticState.from_stack(b2, CFG21)).stack()
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))


def test_singular_gravity_shift_detected():
    l = 7
    kappa = l * (l + 1) / CFG21.radius_a**2
    dt = 480.0
    alpha = 1j * dt * np.sqrt(PAR21.mean_geopotential * kappa)
    b = PrognosticState.zeros(CFG21)
    b.phi_pert.coeffs[l, 3] = 1.0
    with pytest.raises(SolverError):
        solve_lg_shifted(ShiftedSolveSpec(LG, dt, complex(alpha), PAR21), b)


def test_singular_band_shift_detected():
    dt = 300.0
    mat = dense_operator_matrix(L, dt, PAR10, 10)
    lam = np.linalg.eigvals(mat)
    alpha = -lam[np.argmax(np.abs(lam.imag))]
    rng = np.random.default_rng(9)
    b = PrognosticState.from_stack(random_stack(10, rng), CFG10)
    with pytest.raises(SolverError):
        solve_l_shifted(ShiftedSolveSpec(L, dt, complex(alpha), PAR10), b)


def test_factor_cache_reuse():
    solver = ShiftedLinearSolver(L, 120.0, PAR10)
    rng = np.random.default_rng(10)
    b = random_stack(10, rng)
    solver.solve_stacked(1.0 + 1.0j, b)
    n_factors = len(solver._factors)
    assert n_factors == CFG10.trunc + 1
    solver.solve_stacked(1.0 + 1.0j, b)
    assert len(solver._factors) == n_factors
    solver.solve_stacked(2.0 + 1.0j, b)
    assert len(solver._factors) == 2 * n_factors


def test_group_validation():
    from swerexi.swe import N
    with pytest.raises(ConfigurationError):
        ShiftedSolveSpec(N, 480.0, 1.0, PAR21)
    with pytest.raises(ConfigurationError):
        dense_operator_matrix(L, 1.0, PAR21, 16)


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(11)
    s = random_stack(10, rng)
    assert np.array_equal(unpack_stacked(pack_stacked(s), 10), s)
