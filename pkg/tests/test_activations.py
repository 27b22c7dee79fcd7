"""Unit test for modules/activations/activations.py"""
from modules.activations.activations import (
    ActivationKind,
    CombinedScale,
    combined_forward,
    combined_grad,
    logistic,
    noisy_softplus,
    noisy_softplus_grad,
    predict_rate,
    relu,
    softplus_stable,
)
from nslif_files.common.exceptions import InvalidParameterError
from mpmath import mp, mpf, log, exp
import numpy as np
import pytest


def reference_noisy_softplus(x, sigma, k):
    """50 digit evaluation of k*sigma*ln(1+exp(x/(k*sigma)))"""
    mp.dps = 50
    ks = mpf(k) * mpf(sigma)
    return float(ks * log(1 + exp(mpf(x) / ks)))


@pytest.mark.parametrize(
    'x, sigma, k',
    [
        (0.0, 1.0, 1.0),
        (0.5, 0.2, 0.3),
        (-0.5, 0.2, 0.3),
        (3.0, 0.01, 0.19),
        (-40.0, 0.5, 0.35),
        (800.0, 1.0, 1.0),
    ],
)
def test_noisy_softplus_matches_extended_precision(x, sigma, k):
    expected = reference_noisy_softplus(x, sigma, k)
    assert noisy_softplus(x, sigma, k) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_noisy_softplus_at_zero_is_k_sigma_ln2():
    assert noisy_softplus(0.0, 1.0, 1.0) == pytest.approx(np.log(2), rel=1e-15)
    assert noisy_softplus(0.0, 0.5, 0.3) == pytest.approx(0.15 * np.log(2), rel=1e-15)


def test_zero_sigma_is_relu():
    x = np.linspace(-2, 2, 41)
    assert np.array_equal(noisy_softplus(x, 0.0, 0.3), relu(x))
    assert noisy_softplus(-1.0, 0.0, 0.3) == 0.0
    assert noisy_softplus(1.5, 0.0, 0.3) == 1.5


def test_large_argument_does_not_overflow():
    assert noisy_softplus(1000.0, 1.0, 1.0) == pytest.approx(1000.0, rel=1e-15)
    assert noisy_softplus(-1000.0, 1.0, 1.0) >= 0.0
    assert softplus_stable(-800.0) > 0.0


def test_negative_sigma_is_rejected():
    with pytest.raises(InvalidParameterError):
        noisy_softplus(0.1, -0.1, 0.3)


def test_noisy_softplus_is_monotone_in_sigma_and_above_relu():
    x = np.linspace(-1, 1, 21)
    low = noisy_softplus(x, 0.1, 0.3)
    high = noisy_softplus(x, 0.5, 0.3)
    assert np.all(high >= low)
    assert np.all(low >= relu(x))


def test_grad_matches_central_differences():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, 1000)
    sigma = rng.uniform(0.05, 1.0, 1000)
    k = 0.3
    h = 1e-6
    numeric = (noisy_softplus(x + h, sigma, k) - noisy_softplus(x - h, sigma, k)) / (2 * h)
    assert np.max(np.abs(noisy_softplus_grad(x, sigma, k) - numeric)) < 1e-6


def test_grad_is_logistic_and_step_at_zero_sigma():
    assert noisy_softplus_grad(0.0, 1.0, 0.3) == 0.5
    assert noisy_softplus_grad(0.2, 0.5, 0.4) == pytest.approx(float(logistic(1.0)))
    assert noisy_softplus_grad(0.3, 0.0, 0.3) == 1.0
    assert noisy_softplus_grad(-0.3, 0.0, 0.3) == 0.0
    assert noisy_softplus_grad(0.0, 0.0, 0.3) == 0.5


def test_grad_is_the_logistic_of_the_scaled_input():
    x = np.array([-900.0, -40.0, -1.0, 0.0, 1.0, 40.0, 900.0])
    sigma = np.full_like(x, 0.5)
    k = 0.2
    grad = noisy_softplus_grad(x, sigma, k)
    assert np.all(np.isfinite(grad))
    assert np.array_equal(grad, logistic(x / (k * sigma)))
    assert grad[0] == 0.0
    assert grad[-1] == 1.0


@pytest.mark.parametrize('scale', [0.1, 2.0, 37.5])
def test_noisy_softplus_is_homogeneous_in_x_and_sigma(scale):
    rng = np.random.default_rng(11)
    x = rng.uniform(-3, 3, 500)
    sigma = rng.uniform(0.0, 1.5, 500)
    scaled = noisy_softplus(scale * x, scale * sigma, 0.3)
    assert np.allclose(scaled, scale * noisy_softplus(x, sigma, 0.3), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize(
    'name, variant',
    [('noisy-softplus', 'noisy-softplus'), ('relu', 'relu'), ('Softplus', 'softplus'),
     ('noisy_softplus', 'noisy-softplus')],
)
def test_activation_from_name(name, variant):
    assert ActivationKind.from_name(name).variant == variant


def test_unknown_activation():
    with pytest.raises(InvalidParameterError):
        ActivationKind.from_name('tanh')
    with pytest.raises(InvalidParameterError):
        ActivationKind('softplus', 0.3, None)


def test_activation_dict_round_trip():
    kind = ActivationKind.softplus(0.25, 0.45)
    assert ActivationKind.from_dict(kind.to_dict()) == kind


def test_combined_forward_scales_by_s_tau():
    scale = CombinedScale(s=201.0, tau_syn=5.0)
    assert scale.gain == pytest.approx(1.005)
    kind = ActivationKind.noisy_softplus(0.3)
    y = combined_forward(kind, 0.4, 0.2, scale)
    assert y == pytest.approx(noisy_softplus(0.4, 0.2, 0.3) * 1.005, rel=1e-15)


def test_combined_forward_needs_sigma_only_for_noisy_softplus():
    scale = CombinedScale()
    with pytest.raises(InvalidParameterError):
        combined_forward(ActivationKind.noisy_softplus(), 0.4, None, scale)
    assert combined_forward(ActivationKind.relu(), 0.4, None, scale) == pytest.approx(0.4 * scale.gain)
    softplus = ActivationKind.softplus(0.3, 0.45)
    assert combined_forward(softplus, 0.4, None, scale) == pytest.approx(
        noisy_softplus(0.4, 0.45, 0.3) * scale.gain
    )


@pytest.mark.parametrize(
    'kind',
    [ActivationKind.noisy_softplus(0.3), ActivationKind.relu(), ActivationKind.softplus(0.3, 0.45)],
)
def test_combined_grad_matches_central_differences(kind):
    scale = CombinedScale(201.0, 5.0)
    rng = np.random.default_rng(5)
    # keep relu points away from the kink
    x = rng.uniform(0.05, 2, 1000) * rng.choice([-1, 1], 1000)
    sigma = rng.uniform(0.05, 1.0, 1000)
    h = 1e-6
    numeric = (
        combined_forward(kind, x + h, sigma, scale) - combined_forward(kind, x - h, sigma, scale)
    ) / (2 * h)
    assert np.max(np.abs(combined_grad(kind, x, sigma, scale) - numeric)) < 1e-6


def test_predict_rate_uses_s():
    class Fitted:
        s = 200.0

    rate = predict_rate(ActivationKind.noisy_softplus(0.3), 1.0, 0.0, Fitted())
    assert rate == pytest.approx(200.0)


def test_invalid_scale():
    with pytest.raises(InvalidParameterError):
        CombinedScale(s=0.0)
    with pytest.raises(InvalidParameterError):
        CombinedScale(tau_syn=-1.0)
