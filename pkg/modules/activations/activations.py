"""
Activation functions shared by the trainer and the rate predictions.

Noisy Softplus models the firing rate of a LIF neuron driven by a noisy
current: the response to mean current x at noise level sigma is
k*sigma*ln(1 + exp(x / (k*sigma))), which reduces to ReLU as sigma -> 0.
The combined forms multiply by S*tau_syn so that a unit of activation equals
a firing rate of 1/tau_syn.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from nslif_files.common.exceptions import InvalidParameterError

NOISY_SOFTPLUS = 'noisy-softplus'
RELU = 'relu'
SOFTPLUS = 'softplus'
VARIANTS = (NOISY_SOFTPLUS, RELU, SOFTPLUS)


@dataclass(frozen=True)
class ActivationKind:
    variant: str = NOISY_SOFTPLUS
    k: float = 0.30
    # only used by the softplus variant, a static noise level in nA
    fixed_sigma: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(
                f'Unknown activation {self.variant}, use one of {", ".join(VARIANTS)}'
            )
        if self.variant != RELU and not self.k > 0:
            raise InvalidParameterError(f'k must be > 0, got {self.k}')
        if self.variant == SOFTPLUS and not (
            self.fixed_sigma is not None and self.fixed_sigma > 0
        ):
            raise InvalidParameterError(
                f'softplus needs a fixed sigma > 0, got {self.fixed_sigma}'
            )

    @classmethod
    def noisy_softplus(cls, k=0.30):
        return cls(NOISY_SOFTPLUS, k)

    @classmethod
    def relu(cls):
        return cls(RELU, 1.0)

    @classmethod
    def softplus(cls, k=0.30, sigma=0.45):
        return cls(SOFTPLUS, k, sigma)

    @classmethod
    def from_name(cls, name, k=0.30, softplus_sigma=0.45):
        """Lookup used by the command line: noisy-softplus, relu or softplus"""
        name = str(name).strip().lower().replace('_', '-')
        if name == NOISY_SOFTPLUS:
            return cls.noisy_softplus(k)
        if name == RELU:
            return cls.relu()
        if name == SOFTPLUS:
            return cls.softplus(k, softplus_sigma)
        raise InvalidParameterError(
            f'Unknown activation {name}, use one of {", ".join(VARIANTS)}'
        )

    @property
    def needs_sigma(self):
        return self.variant == NOISY_SOFTPLUS

    def to_dict(self):
        return {'variant': self.variant, 'k': self.k, 'fixed_sigma': self.fixed_sigma}

    @classmethod
    def from_dict(cls, data):
        return cls(data['variant'], data.get('k', 0.30), data.get('fixed_sigma'))


@dataclass(frozen=True)
class CombinedScale:
    """
    End to end gain of the combined activation.
    s is the rate scale S (Hz per unit of activation), tau_syn is in ms.
    """
    s: float = 201.0
    tau_syn: float = 5.0

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidParameterError(f'S must be > 0, got {self.s}')
        if not self.tau_syn > 0:
            raise InvalidParameterError(f'tau_syn must be > 0, got {self.tau_syn}')

    @property
    def gain(self):
        # tau_syn in seconds, the only ms -> s conversion of the activations
        return self.s * self.tau_syn / 1000.0

    @property
    def target_rate(self):
        """Output rate (Hz) of a unit whose activation is 1"""
        return 1000.0 / self.tau_syn


def softplus_stable(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def relu(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def logistic(z):
    return expit(np.asarray(z, dtype=float))


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise InvalidParameterError('sigma must be >= 0')
    return sigma


def noisy_softplus(x, sigma, k):
    """
    k*sigma*ln(1+exp(x/(k*sigma))), evaluated elementwise.
    sigma = 0 gives the ReLU limit max(0, x).
    """
    x = np.asarray(x, dtype=float)
    sigma = _check_sigma(sigma)
    ks = k * sigma
    noisy = ks > 0
    # avoid dividing by zero where the ReLU branch is taken anyway
    safe_ks = np.where(noisy, ks, 1.0)
    out = np.where(noisy, safe_ks * softplus_stable(x / safe_ks), np.maximum(x, 0.0))
    return out if out.ndim else float(out)


def noisy_softplus_grad(x, sigma, k):
    """
    d/dx of noisy_softplus, the logistic function of x/(k*sigma).
    sigma = 0 gives the step function (1/2 at x = 0).
    """
    x = np.asarray(x, dtype=float)
    sigma = _check_sigma(sigma)
    ks = k * sigma
    noisy = ks > 0
    safe_ks = np.where(noisy, ks, 1.0)
    step = np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    out = np.where(noisy, logistic(x / safe_ks), step)
    return out if out.ndim else float(out)


def _unscaled(kind, x, sigma, grad=False):
    if kind.variant == NOISY_SOFTPLUS:
        if sigma is None:
            raise InvalidParameterError('noisy-softplus needs the sigma channel')
        fn = noisy_softplus_grad if grad else noisy_softplus
        return fn(x, sigma, kind.k)
    if kind.variant == SOFTPLUS:
        fn = noisy_softplus_grad if grad else noisy_softplus
        return fn(x, kind.fixed_sigma, kind.k)
    # relu
    return noisy_softplus_grad(x, 0.0, 1.0) if grad else noisy_softplus(x, 0.0, 1.0)


def combined_forward(kind: ActivationKind, x, sigma, scale: CombinedScale):
    """f(x[, sigma]) * S * tau_syn, so y is a firing rate times tau_syn"""
    return _unscaled(kind, x, sigma) * scale.gain


def combined_grad(kind: ActivationKind, x, sigma, scale: CombinedScale):
    """dy/dx of combined_forward with sigma held constant"""
    return _unscaled(kind, x, sigma, grad=True) * scale.gain


def predict_rate(kind: ActivationKind, x, sigma, calib):
    """
    Predicted output firing rate (Hz) of a LIF neuron, f(x[, sigma]) * S.
    :param calib: any object with the fitted rate scale in `calib.s`
    """
    if not calib.s > 0:
        raise InvalidParameterError(f'S must be > 0, got {calib.s}')
    return _unscaled(kind, x, sigma) * calib.s
