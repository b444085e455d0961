import math

import numpy as np
import pytest

import ratstab as rs
from ratstab.errors import ConfigError, NotHurwitzError
from ratstab.sysmodel import U_ZERO_GRID, Nonlinearity

from conftest import BENCH_K, BENCH_L


def test_scale_gains_theta_one():
    L_s, K_s = rs.scale_gains(BENCH_L, BENCH_K, 1.0)
    assert np.array_equal(L_s, BENCH_L)
    assert np.array_equal(K_s, BENCH_K)


def test_scale_gains_benchmark_golden():
    L_s, K_s = rs.scale_gains(BENCH_L, BENCH_K, 8.0)
    assert L_s.tolist() == [-112.0, -1792.0]
    assert K_s.tolist() == [-1920.0, -240.0]


def test_scale_gains_rejects_bad_theta():
    with pytest.raises(ConfigError):
        rs.scale_gains(BENCH_L, BENCH_K, 0.0)
    with pytest.raises(ConfigError):
        rs.scale_gains(BENCH_L, BENCH_K, -2.0)


def test_scale_gains_matrix_identities():
    # Delta (L(theta) C) Delta^-1 = theta L C  and  Delta B K(theta) = theta B K Delta
    rng = np.random.default_rng(17)
    for _ in range(30):
        n = int(rng.integers(1, 7))
        theta = float(rng.uniform(0.5, 10.0))
        L = rng.normal(size=n)
        K = rng.normal(size=n)
        L_s, K_s = rs.scale_gains(L, K, theta)
        _, B, C = rs.build_companion(n)
        delta = rs.delta_theta(theta, n)
        delta_inv = np.diag(1.0 / np.diag(delta))
        lhs = delta @ np.outer(L_s, C) @ delta_inv
        rhs = theta * np.outer(L, C)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale
        lhs = delta @ np.outer(B, K_s)
        rhs = theta * np.outer(B, K) @ delta
        scale = max(1.0, float(np.max(np.abs(rhs))))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_registry_zero():
    f = rs.make_nonlinearity("zero", 2)
    out = f(np.array([3.0, -1.0]), np.array([0.5, 2.0]), 7.0)
    assert np.array_equal(out, np.zeros(2))


def test_registry_paper_example_value():
    f = rs.make_nonlinearity("paper_example", 2)
    out = f(np.array([math.pi, 0.0]), np.array([2.0, 0.0]), 0.0)
    assert out[0] == pytest.approx(2.0 - math.pi, rel=1e-15)
    assert out[1] == 0.0


def test_registry_unknown_name():
    with pytest.raises(ConfigError, match="unknown nonlinearity"):
        rs.make_nonlinearity("nope", 2)


def test_zero_at_origin_grid():
    for name in ("zero", "paper_example"):
        f = rs.make_nonlinearity(name, 3)
        for u in U_ZERO_GRID:
            assert np.linalg.norm(f(np.zeros(3), np.zeros(3), u)) == 0.0


def test_expression_triangularity_violation():
    with pytest.raises(ConfigError, match="'x2'"):
        rs.make_nonlinearity(["x2", "x1"], 2)
    with pytest.raises(ConfigError, match="'xd3'"):
        rs.make_nonlinearity(["x1", "xd3", "x1"], 3)
    with pytest.raises(ConfigError, match="'t'"):
        rs.make_nonlinearity(["t*x1", "0"], 2)


def test_expression_nonlinearity_matches_builtin():
    f_expr = rs.make_nonlinearity(["x1*cos(x1)+xd1*cos(u)", "0"], 2)
    f_builtin = rs.make_nonlinearity("paper_example", 2)
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.uniform(-5, 5, 2)
        xd = rng.uniform(-5, 5, 2)
        u = float(rng.uniform(-3, 3))
        assert np.allclose(f_expr(x, xd, u), f_builtin(x, xd, u), rtol=1e-15, atol=1e-15)


def test_nonzero_origin_rejected():
    with pytest.raises(ConfigError, match="must vanish"):
        rs.make_nonlinearity(["x1+1", "0"], 2)


def test_opaque_triangularity_probing():
    with pytest.raises(ConfigError, match="triangularity"):
        Nonlinearity(2, fn=lambda x, xd, u: np.array([x[1], 0.0]), name="bad")
    with pytest.raises(ConfigError, match="triangularity"):
        Nonlinearity(2, fn=lambda x, xd, u: np.array([xd[1], 0.0]), name="bad-delayed")


def test_gainset_validates_hurwitz():
    gains = rs.GainSet(L=BENCH_L, K=BENCH_K, theta=8.0)
    assert gains.n == 2
    assert np.array_equal(gains.A_L, np.array([[-14.0, 1.0], [-28.0, 0.0]]))
    assert np.array_equal(gains.A_K, np.array([[0.0, 1.0], [-30.0, -30.0]]))
    with pytest.raises(NotHurwitzError, match="B\\*K"):
        rs.GainSet(L=BENCH_L, K=np.zeros(2), theta=8.0)
    with pytest.raises(NotHurwitzError, match="L\\*C"):
        rs.GainSet(L=np.zeros(2), K=BENCH_K, theta=8.0)
    with pytest.raises(ConfigError):
        rs.GainSet(L=BENCH_L, K=BENCH_K, theta=0.0)


def test_gainset_scaled_regenerate():
    gains = rs.GainSet(L=BENCH_L, K=BENCH_K, theta=8.0)
    assert np.array_equal(gains.L_scaled, gains.L_scaled)
    assert gains.L_scaled.tolist() == [-112.0, -1792.0]
    assert gains.K_scaled.tolist() == [-1920.0, -240.0]
    assert np.allclose(np.diag(gains.delta), [1.0, 0.125])


def test_systemspec_validation():
    f = rs.make_nonlinearity("zero", 2)
    with pytest.raises(ConfigError):
        rs.SystemSpec(n=2, tau=0.0, f=f, lipschitz_k=0.0)
    with pytest.raises(ConfigError):
        rs.SystemSpec(n=2, tau=1.0, f=f, lipschitz_k=-0.5)
    with pytest.raises(ConfigError):
        rs.SystemSpec(n=3, tau=1.0, f=f, lipschitz_k=0.0)  # dimension mismatch
    spec = rs.SystemSpec(n=2, tau=1.0, f=f, lipschitz_k=0.0)
    assert spec.domain_box == ((-10.0, 10.0), (-10.0, 10.0))


def test_lipschitz_zero_function():
    f = rs.make_nonlinearity("zero", 2)
    assert rs.estimate_lipschitz(f, [(-5, 5), (-5, 5)], samples=200, seed=0) == 0.0


def test_lipschitz_sine():
    f = Nonlinearity(2, fn=lambda x, xd, u: np.array([math.sin(x[0]), 0.0]), name="sine")
    est = rs.estimate_lipschitz(f, [(-5, 5), (-5, 5)], samples=2000, seed=0)
    assert est == pytest.approx(1.0, abs=0.05)


def test_lipschitz_benchmark_band():
    # dense-grid oracle for the x-partial of x*cos(x) on [-20, 20]
    grid = np.linspace(-20.0, 20.0, 400001)
    oracle = float(np.max(np.abs(np.cos(grid) - grid * np.sin(grid))))
    f = rs.make_nonlinearity("paper_example", 2)
    est = rs.estimate_lipschitz(f, [(-20, 20), (-20, 20)], samples=2000, seed=0)
    assert est == pytest.approx(17.9, abs=0.5)
    assert est <= oracle + 1e-3  # a lower bound must not exceed the true sup
    assert est >= oracle - 0.5


def test_lipschitz_is_deterministic():
    f = rs.make_nonlinearity("paper_example", 2)
    a = rs.estimate_lipschitz(f, [(-9, 9), (-9, 9)], samples=300, seed=42)
    b = rs.estimate_lipschitz(f, [(-9, 9), (-9, 9)], samples=300, seed=42)
    assert a == b


def test_lipschitz_monotone_in_box():
    f = rs.make_nonlinearity("paper_example", 2)
    small = rs.estimate_lipschitz(f, [(-10, 10), (-10, 10)], samples=500, seed=1)
    large = rs.estimate_lipschitz(f, [(-20, 20), (-20, 20)], samples=500, seed=1)
    assert large >= small - 1e-12
    f_sine = Nonlinearity(1, fn=lambda x, xd, u: np.array([math.sin(x[0])]), name="sine1")
    small = rs.estimate_lipschitz(f_sine, [(-2, 2)], samples=500, seed=1)
    large = rs.estimate_lipschitz(f_sine, [(-5, 5)], samples=500, seed=1)
    assert large >= small - 1e-12


def test_lipschitz_input_validation():
    f = rs.make_nonlinearity("zero", 2)
    with pytest.raises(ConfigError):
        rs.estimate_lipschitz(f, [(-5, 5), (-5, 5)], samples=50, seed=0)
    with pytest.raises(ConfigError):
        rs.estimate_lipschitz(f, [(5, -5), (-5, 5)], samples=200, seed=0)
    with pytest.raises(ConfigError):
        rs.estimate_lipschitz(f, [(-5, 5)], samples=200, seed=0)  # wrong arity
