import math

import numpy as np
import pytest

from mlmc_sched.backends import SampleRecord, SyntheticBackend, SyntheticRates
from mlmc_sched.perf import RuntimeFactorDistribution
from mlmc_sched.streams import RandomStream


def test_level_zero_correction_is_fine_value():
    backend = SyntheticBackend(SyntheticRates())
    rec = backend.draw(0, 3, RandomStream(1))
    assert rec.y_value == rec.q_fine


def test_record_invariant_enforced():
    with pytest.raises(ValueError):
        SampleRecord(level=0, index=0, y_value=1.0, q_fine=2.0, duration=1.0, stream_id="x")
    with pytest.raises(ValueError):
        SampleRecord(level=1, index=0, y_value=1.0, q_fine=2.0, duration=0.0, stream_id="x")


def test_redraw_is_bit_identical():
    backend = SyntheticBackend(SyntheticRates())
    root = RandomStream(17)
    a = backend.draw(2, 5, root)
    b = backend.draw(2, 5, root)
    assert a == b


def test_draw_order_does_not_matter():
    backend = SyntheticBackend(SyntheticRates())
    root = RandomStream(17)
    late = backend.draw(1, 9, root)
    backend.draw(1, 3, root)
    again = backend.draw(1, 9, root)
    assert late == again


def test_zero_variance_gives_exact_mean():
    rates = SyntheticRates(c_v=1e-30)
    backend = SyntheticBackend(rates)
    rec = backend.draw(2, 0, RandomStream(3))
    assert rec.y_value == pytest.approx(rates.mean_y(2), abs=1e-12)


def test_level_zero_mean_includes_limit():
    rates = SyntheticRates(alpha=1 / 3, c_b=0.5, q_limit=2.0, c_v=1e-30)
    rec = SyntheticBackend(rates).draw(0, 0, RandomStream(3))
    assert rec.y_value == pytest.approx(2.5)


def test_variance_decay_matches_rates():
    rates = SyntheticRates(alpha=1 / 3, beta=2 / 3, c_v=0.04)
    backend = SyntheticBackend(rates)
    root = RandomStream(11)
    ys = np.array([backend.draw(2, i, root).y_value for i in range(100_000)])
    target = rates.var_y(2)
    assert ys.var() == pytest.approx(target, rel=0.05)


def test_mean_within_three_standard_errors():
    rates = SyntheticRates()
    backend = SyntheticBackend(rates)
    root = RandomStream(23)
    ys = np.array([backend.draw(1, i, root).y_value for i in range(10_000)])
    se = ys.std() / math.sqrt(len(ys))
    assert abs(ys.mean() - rates.mean_y(1)) <= 3 * se


def test_duration_uses_cost_model_and_factor():
    rates = SyntheticRates(gamma=1.0, c_c=2.0)
    backend = SyntheticBackend(rates)
    rec = backend.draw(2, 0, RandomStream(0))
    assert rec.duration == pytest.approx(2.0 * 8.0**2)
    noisy = SyntheticBackend(rates, RuntimeFactorDistribution("half-normal", var_param=0.5))
    rec2 = noisy.draw(2, 0, RandomStream(0))
    assert rec2.duration >= rec.duration


def test_uniform_noise_has_unit_variance_scaling():
    rates = SyntheticRates(noise_kind="uniform", c_v=0.09)
    backend = SyntheticBackend(rates)
    root = RandomStream(5)
    ys = np.array([backend.draw(0, i, root).y_value for i in range(50_000)])
    assert ys.var() == pytest.approx(rates.var_y(0), rel=0.05)


def test_rate_validation():
    with pytest.raises(ValueError):
        SyntheticRates(alpha=0.25, beta=0.75)  # beta > 2 alpha
    with pytest.raises(ValueError):
        SyntheticRates(gamma=0.5)
