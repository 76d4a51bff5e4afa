"""Objective terms: schedule exactness, KL closed form, reconstruction loss."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from accent_tts.config import KLScheduleConfig
from accent_tts.errors import AccentTtsError
from accent_tts.losses import (
    LossBreakdown,
    gaussian_kl,
    kl_coefficient,
    kl_divergence,
    recon_loss,
)
from accent_tts.models.posterior import PosteriorOutput

SCHED = KLScheduleConfig()


def test_schedule_paper_points():
    assert kl_coefficient(0, SCHED) == pytest.approx(1e-4, abs=1e-12)
    assert kl_coefficient(10_000, SCHED) == pytest.approx(1e-4, abs=1e-12)
    assert kl_coefficient(22_500, SCHED) == pytest.approx(3e-4, abs=1e-12)
    assert kl_coefficient(35_000, SCHED) == pytest.approx(5e-4, abs=1e-12)
    assert kl_coefficient(100_000, SCHED) == pytest.approx(5e-4, abs=1e-12)
    assert kl_coefficient(150_000, SCHED) == pytest.approx(5e-4, abs=1e-12)


def test_schedule_rejects_negative_step():
    with pytest.raises(ValueError):
        kl_coefficient(-1, SCHED)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=200_000))
def test_schedule_monotone_and_bounded(step):
    value = kl_coefficient(step, SCHED)
    assert SCHED.start_value <= value <= SCHED.end_value
    assert kl_coefficient(step + 1, SCHED) >= value


def test_schedule_continuity_at_ramp_edges():
    slope = (SCHED.end_value - SCHED.start_value) / (
        SCHED.ramp_end_step - SCHED.ramp_start_step
    )
    for step in (SCHED.ramp_start_step, SCHED.ramp_end_step):
        delta = abs(kl_coefficient(step + 1, SCHED) - kl_coefficient(step, SCHED))
        assert delta <= slope * 1.000001


def test_kl_zero_iff_standard_normal():
    assert float(gaussian_kl(torch.zeros(1, 4), torch.zeros(1, 4))) == 0.0
    # any perturbation in either argument is strictly positive
    for mu, lv in [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.0, -0.01)]:
        val = float(gaussian_kl(torch.full((1, 4), mu), torch.full((1, 4), lv)))
        assert val > 0


def test_kl_unit_mean_case():
    # d_z = 1, mu = 1, logvar = 0 -> 1/2
    assert float(gaussian_kl(torch.ones(1, 1), torch.zeros(1, 1))) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=1, max_size=8),
    st.lists(st.floats(-2, 2), min_size=1, max_size=8),
)
def test_kl_nonnegative_property(mus, lvs):
    d = min(len(mus), len(lvs))
    mu = torch.tensor(mus[:d]).unsqueeze(0)
    lv = torch.tensor(lvs[:d]).unsqueeze(0)
    assert float(gaussian_kl(mu, lv)) >= 0


def test_kl_closed_form_matches_monte_carlo():
    rng = np.random.default_rng(17)
    for _ in range(5):
        mu = rng.standard_normal(8)
        logvar = rng.uniform(-1.5, 1.0, 8)
        closed = 0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar)
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * rng.standard_normal((1_000_000, 8))
        log_q = -0.5 * (((z - mu) / sigma) ** 2 + logvar + np.log(2 * np.pi)).sum(axis=1)
        log_p = -0.5 * (z**2 + np.log(2 * np.pi)).sum(axis=1)
        mc = (log_q - log_p).mean()
        assert abs(mc - closed) / closed < 0.01


def test_kl_divergence_rejects_nonfinite():
    bad = PosteriorOutput(
        mu_s=torch.tensor([[float("nan")]]), logvar_s=torch.zeros(1, 1),
        mu_a=torch.zeros(1, 1), logvar_a=torch.zeros(1, 1),
    )
    with pytest.raises(AccentTtsError):
        kl_divergence(bad)


def test_recon_identity_and_unit_difference():
    a = torch.randn(2, 2)
    assert float(recon_loss(a, a)) == 0.0
    b = a + 1.0
    assert float(recon_loss(b, a)) == pytest.approx(1.0)


def test_recon_scaling_is_quadratic():
    a = torch.randn(3, 4)
    d = torch.randn(3, 4)
    base = float(recon_loss(a + d, a))
    scaled = float(recon_loss(a + 2.5 * d, a))
    assert scaled == pytest.approx(2.5**2 * base, rel=1e-6)


def test_recon_shape_mismatch_rejected():
    with pytest.raises(AccentTtsError):
        recon_loss(torch.zeros(2, 3), torch.zeros(3, 2))


def test_recon_frobenius_mode():
    a = torch.zeros(2, 2)
    b = torch.ones(2, 2)
    assert float(recon_loss(b, a, norm="frobenius")) == pytest.approx(2.0)


def test_breakdown_decomposition_identity():
    bd = LossBreakdown.from_terms(recon=1.25, kl_s=3.0, kl_a=2.0, stop=0.5, beta=1e-4)
    assert bd.total == 1.25 + 1e-4 * (3.0 + 2.0) + 0.5
    with pytest.raises(AccentTtsError):
        LossBreakdown(recon=1.0, kl_s=1.0, kl_a=1.0, stop=0.0, beta=0.1, total=999.0)
