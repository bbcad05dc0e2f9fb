import numpy as np
import pytest

from extremal_domains.errors import ConsistencyError
from extremal_domains.nonlinearity import (
    NonlinearitySpec,
    check_class,
    constant_one,
    linear_plus_quadratic,
    periodic_forcing,
)

SAMPLE = np.array([[0.0, 0.0], [np.pi / 2, 0.0], [1.0, 2.0], [4.0, 5.0]])


def test_constant_one_classification():
    rep = check_class(constant_one(), SAMPLE)
    assert rep.passed
    assert rep.class_tag == "positive_at_zero"
    assert rep.inf_f_at_zero == 1.0


def test_bifurcation_classification():
    rep = check_class(linear_plus_quadratic(1.0, -1.0), SAMPLE)
    assert rep.passed
    assert rep.class_tag == "bifurcation"
    assert rep.c_at_zero == pytest.approx(1.0)
    assert rep.f_zz_at_zero_range == (-2.0, -2.0)


def test_periodic_forcing_infimum():
    rep = check_class(periodic_forcing(0.25), SAMPLE)
    assert rep.passed
    theta_dense = np.stack([np.linspace(0, 2 * np.pi, 64), np.zeros(64)], axis=-1)
    rep_dense = check_class(periodic_forcing(0.25), theta_dense)
    assert rep_dense.inf_f_at_zero == pytest.approx(0.75, abs=1e-3)


def test_nonpositive_class_fails():
    rep = check_class(periodic_forcing(1.5), SAMPLE)
    assert not rep.passed
    assert any("inf f" in f for f in rep.failures)


def test_inconsistent_antiderivative_raises():
    bad = NonlinearitySpec(
        f=lambda x, z: 1.0 + 0.0 * np.asarray(x)[..., 0] + 0.0 * np.asarray(z),
        f_z=lambda x, z: 0.0 * np.asarray(x)[..., 0] + 0.0 * np.asarray(z),
        F=lambda x, z: 2.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],  # wrong
        class_tag="positive_at_zero",
    )
    with pytest.raises(ConsistencyError) as err:
        check_class(bad, SAMPLE)
    assert err.value.max_deviation > 0.5


@pytest.mark.parametrize("factory,args", [
    (constant_one, ()),
    (linear_plus_quadratic, (1.0, -1.0)),
    (linear_plus_quadratic, (2.0, 0.7)),
    (periodic_forcing, (0.25,)),
])
def test_builtin_derivatives_match_finite_differences(factory, args):
    spec = factory(*args)
    pts = SAMPLE
    h = 1e-6
    for z in (0.0, 0.2, 0.5):
        fd_fz = (np.asarray(spec.f(pts, z + h)) - np.asarray(spec.f(pts, z - h))) / (2 * h)
        fz = np.asarray(spec.f_z(pts, z + 0.0 * fd_fz))
        scale = max(1.0, np.abs(fz).max())
        assert np.abs(fd_fz - fz).max() / scale < 1e-8
        fd_fzz = (np.asarray(spec.f_z(pts, z + h)) - np.asarray(spec.f_z(pts, z - h))) / (2 * h)
        fzz = np.asarray(spec.f_zz(pts, z + 0.0 * fd_fzz))
        assert np.abs(fd_fzz - fzz).max() / max(1.0, np.abs(fzz).max()) < 1e-8


def test_F_vanishes_at_zero():
    for spec in (constant_one(), linear_plus_quadratic(1.0, 1.0), periodic_forcing(0.1)):
        assert np.abs(np.asarray(spec.F(SAMPLE, 0.0))).max() == 0.0
