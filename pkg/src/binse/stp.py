"""Codebook-driven binaural estimation of speech/noise short-term predictor parameters.

Per frame, every (speech entry, noise entry) pair gets maximum-likelihood
excitation variances by multiplicative updates on an Itakura-Saito cost;
pair weights combine the likelihood with excitation-variance priors, and
the final estimate is the weighted average (AR shapes averaged in the LSF
domain so the result stays stable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.special import digamma, gammaln, polygamma

from .linpred import ArModel, LsfVector, ar_envelope, ar_to_lsf, levinson_durbin, lsf_to_ar
from .signal_core import Spectrum

OBSERVED_FLOOR_REL = 1e-12
MU_DEFAULT_ITERS = 50
MU_REL_TOL = 1e-6
DC_PSD_FLOOR = 0.01
DC_PSD_SMOOTHING = 0.9


@dataclass(frozen=True)
class StpEstimate:
    """Joint speech+noise AR parameter estimate for one frame."""

    speech: ArModel
    noise: ArModel
    frame_index: int = 0

    def __post_init__(self):
        for model in (self.speech, self.noise):
            if not np.isfinite(model.excitation_variance) or model.excitation_variance < 0:
                raise ValueError("excitation variances must be finite and >= 0")


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior (shape, scale) on an excitation variance."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError("shape must be positive and finite")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")

    def log_pdf(self, x: float) -> float:
        if x <= 0:
            return -np.inf
        k, z = self.shape, self.scale
        return float((k - 1) * np.log(x) - x / z - gammaln(k) - k * np.log(z))


def _floored(observed: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    peak = observed.max() if len(observed) else 0.0
    if peak <= 0.0:
        return np.maximum(observed, 1e-300)
    return np.maximum(observed, OBSERVED_FLOOR_REL * peak)


def is_divergence(observed, modeled) -> float:
    """Mean Itakura-Saito divergence (1/K) sum [P/P^ - ln(P/P^) - 1]."""
    p = np.asarray(observed.bins if isinstance(observed, Spectrum) else observed, float)
    q = np.asarray(modeled.bins if isinstance(modeled, Spectrum) else modeled, float)
    if len(p) != len(q):
        raise ValueError("spectra must have equal length")
    if np.any(q <= 0):
        raise ValueError("modeled spectrum must be strictly positive")
    ratio = _floored(p) / q
    return float(np.mean(ratio - np.log(ratio) - 1.0))


def ml_excitation_variances(
    pzl,
    pzr,
    speech_env: npt.NDArray[np.float64],
    noise_env: npt.NDArray[np.float64],
    init: tuple[float, float] | None = None,
    iters: int = MU_DEFAULT_ITERS,
):
    """Multiplicative-update ML estimation of (speech, noise) excitation variances.

    Minimizes the summed two-channel Itakura-Saito cost between the
    observed periodograms and ``sigma_d^2 * speech_env + sigma_v^2 * noise_env``.
    Returns (sigma_d2, sigma_v2, final_cost).
    """
    pl = np.asarray(pzl.bins if isinstance(pzl, Spectrum) else pzl, float)
    pr = np.asarray(pzr.bins if isinstance(pzr, Spectrum) else pzr, float)
    ps = np.asarray(speech_env, float)
    pw = np.asarray(noise_env, float)
    if np.any(ps <= 0) or np.any(pw <= 0):
        raise ValueError("envelopes must be strictly positive")
    total = pl + pr
    if init is None:
        mean_power = float(total.mean()) / 2.0
        sd = sv = max(mean_power / 2.0, 1e-12)
    else:
        sd, sv = init
        if sd <= 0 or sv <= 0:
            raise ValueError("initial variances must be positive")

    def cost(sd_, sv_):
        modeled = sd_ * ps + sv_ * pw
        return is_divergence(pl, modeled) + is_divergence(pr, modeled)

    prev = cost(sd, sv)
    for _ in range(iters):
        modeled = sd * ps + sv * pw
        inv = 1.0 / modeled
        weighted = inv * inv * total
        sd = sd * float(ps @ weighted) / (2.0 * float(ps @ inv))
        sv = sv * float(pw @ weighted) / (2.0 * float(pw @ inv))
        if sd <= 0 and sv <= 0:
            break
        sd = max(sd, 0.0)
        sv = max(sv, 0.0)
        if sd == 0 and sv == 0:
            break
        cur = cost(max(sd, 1e-300), max(sv, 1e-300))
        if abs(prev - cur) < MU_REL_TOL * max(abs(prev), 1e-30):
            prev = cur
            break
        prev = cur
    return float(sd), float(sv), float(prev)


def pair_log_likelihood(pzl, pzr, modeled, frame_len: int) -> float:
    """Unnormalized log-likelihood -(M/2)[d_IS(l) + d_IS(r)]."""
    return -0.5 * frame_len * (is_divergence(pzl, modeled) + is_divergence(pzr, modeled))


def pair_likelihood(pzl, pzr, modeled, frame_len: int) -> float:
    """Unnormalized pair likelihood exp(-(M/2)[d_IS(l)+d_IS(r)])."""
    return float(np.exp(pair_log_likelihood(pzl, pzr, modeled, frame_len)))


@dataclass
class StpDiagnostics:
    best_speech_index: int = -1
    best_noise_index: int = -1
    best_log_weight: float = -np.inf
    underflow_fallback: bool = False
    weights: npt.NDArray[np.float64] | None = None  # normalized (ns, nw) posterior


def estimate_stp(
    pzl: Spectrum,
    pzr: Spectrum,
    speech_entries: list[ArModel],
    noise_entries: list[ArModel],
    frame_len: int,
    noise_var_prior: GammaPrior | None = None,
    mu_iters: int = MU_DEFAULT_ITERS,
    frame_index: int = 0,
    diagnostics: StpDiagnostics | None = None,
) -> StpEstimate:
    """MMSE estimate of the joint STP vector over the codebook pair grid.

    AR shapes are averaged in the LSF domain under the posterior pair
    weights; excitation variances are averaged directly.  The prior on the
    speech variance is uniform; the noise variance optionally carries a
    Gamma prior.
    """
    if len(pzl) != len(pzr):
        raise ValueError("channel spectra must have equal length")
    if not speech_entries or not noise_entries:
        raise ValueError("codebooks must be non-empty")
    k = len(pzl)
    ns, nw = len(speech_entries), len(noise_entries)

    speech_envs = [ar_envelope(m, k) for m in speech_entries]
    noise_envs = [ar_envelope(m, k) for m in noise_entries]
    speech_lsfs = [ar_to_lsf(m).frequencies for m in speech_entries]
    noise_lsfs = [ar_to_lsf(m).frequencies for m in noise_entries]

    log_weights = np.full((ns, nw), -np.inf)
    sig_d = np.zeros((ns, nw))
    sig_v = np.zeros((ns, nw))
    for i in range(ns):
        for j in range(nw):
            sd, sv, _ = ml_excitation_variances(
                pzl, pzr, speech_envs[i], noise_envs[j], iters=mu_iters
            )
            sig_d[i, j] = sd
            sig_v[i, j] = sv
            modeled = max(sd, 1e-300) * speech_envs[i] + max(sv, 1e-300) * noise_envs[j]
            lw = pair_log_likelihood(pzl, pzr, modeled, frame_len)
            if noise_var_prior is not None:
                lw += noise_var_prior.log_pdf(sv)
            log_weights[i, j] = lw

    best_flat = int(np.argmax(log_weights))
    bi, bj = divmod(best_flat, nw)
    peak = log_weights[bi, bj]
    fallback = False
    if not np.isfinite(peak):
        weights = np.zeros((ns, nw))
        weights[bi, bj] = 1.0
        fallback = True
    else:
        weights = np.exp(log_weights - peak)
        total = weights.sum()
        if total <= 0 or not np.isfinite(total):
            weights = np.zeros((ns, nw))
            weights[bi, bj] = 1.0
            fallback = True
        else:
            weights /= total

    if diagnostics is not None:
        diagnostics.best_speech_index = bi
        diagnostics.best_noise_index = bj
        diagnostics.best_log_weight = float(peak)
        diagnostics.underflow_fallback = fallback
        diagnostics.weights = weights.copy()

    w_speech = weights.sum(axis=1)
    w_noise = weights.sum(axis=0)
    avg_speech_lsf = np.einsum("i,ij->j", w_speech, np.array(speech_lsfs))
    avg_noise_lsf = np.einsum("i,ij->j", w_noise, np.array(noise_lsfs))
    speech_model = lsf_to_ar(LsfVector(np.sort(avg_speech_lsf)))
    noise_model = lsf_to_ar(LsfVector(np.sort(avg_noise_lsf)))
    avg_sd = float((weights * sig_d).sum())
    avg_sv = float((weights * sig_v).sum())
    return StpEstimate(
        speech=ArModel(speech_model.coefficients, avg_sd),
        noise=ArModel(noise_model.coefficients, avg_sv),
        frame_index=frame_index,
    )


def dual_channel_noise_psd_raw(pzl, pzr, cross) -> npt.NDArray[np.float64]:
    """Instantaneous magnitude-cross-spectrum noise PSD estimate (floored)."""
    pl = np.asarray(pzl.bins if isinstance(pzl, Spectrum) else pzl, float)
    pr = np.asarray(pzr.bins if isinstance(pzr, Spectrum) else pzr, float)
    cx = np.asarray(cross)
    if not (len(pl) == len(pr) == len(cx)):
        raise ValueError("spectra and cross-spectrum must have equal length")
    mean_power = 0.5 * (pl + pr)
    return np.maximum(mean_power - np.abs(cx), DC_PSD_FLOOR * mean_power)


class DualChannelNoiseTracker:
    """Recursively smoothed dual-channel noise PSD across frames.

    The coherent (nose-direction) target cancels in the magnitude
    cross-spectrum subtraction; diffuse noise survives.  The channel
    spectra and the complex cross-spectrum are smoothed before taking
    the magnitude: averaging the complex cross-spectrum first lets the
    incoherent noise terms cancel, so |cross| converges to the coherent
    power instead of overestimating it.
    """

    def __init__(self, smoothing: float = DC_PSD_SMOOTHING):
        if not 0.0 <= smoothing < 1.0:
            raise ValueError("smoothing factor must be in [0, 1)")
        self.smoothing = smoothing
        self._mean_power: npt.NDArray[np.float64] | None = None
        self._cross: npt.NDArray[np.complex128] | None = None

    def update(self, pzl, pzr, cross) -> Spectrum:
        pl = np.asarray(pzl.bins if isinstance(pzl, Spectrum) else pzl, float)
        pr = np.asarray(pzr.bins if isinstance(pzr, Spectrum) else pzr, float)
        cx = np.asarray(cross, complex)
        mean_power = 0.5 * (pl + pr)
        if self._mean_power is None:
            self._mean_power = mean_power
            self._cross = cx
        else:
            a = self.smoothing
            self._mean_power = a * self._mean_power + (1.0 - a) * mean_power
            self._cross = a * self._cross + (1.0 - a) * cx
        psd = np.maximum(
            self._mean_power - np.abs(self._cross),
            DC_PSD_FLOOR * self._mean_power,
        )
        return Spectrum(psd)


def noise_psd_to_ar(psd: Spectrum, order: int) -> ArModel:
    """Fit an AR model to a noise PSD via inverse-DFT autocorrelation.

    r(q) = (1/K) sum_k P(k) exp(i 2 pi q k / K), q = 0..order, then
    Levinson-Durbin.  The 1/K factor keeps r(0) equal to the mean PSD so
    the fitted excitation variance lives on the periodogram scale.
    """
    bins = psd.bins
    if np.all(bins == 0):
        raise ValueError("PSD must not be all-zero")
    k = len(bins)
    q = np.arange(order + 1)
    phases = np.exp(2j * np.pi * np.outer(q, np.arange(k)) / k)
    r = np.real(phases @ bins) / k
    return levinson_durbin(r)


def fit_gamma_prior(variance_samples) -> GammaPrior:
    """Maximum-likelihood Gamma fit via Newton iteration on the digamma equation."""
    x = np.asarray(variance_samples, float)
    if len(x) < 10:
        raise ValueError("need at least 10 samples")
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    mean = x.mean()
    log_mean = np.log(x).mean()
    s = np.log(mean) - log_mean
    if s < 1e-12:
        import warnings

        warnings.warn("near-constant samples: degenerate Gamma fit", RuntimeWarning)
        s = 1e-12
    # Minka's initialization, then Newton on ln(k) - psi(k) = s.
    k = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(100):
        f = np.log(k) - digamma(k) - s
        fp = 1.0 / k - polygamma(1, k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < 1e-12 * k:
            k = k_new
            break
        k = k_new
    return GammaPrior(shape=float(k), scale=float(mean / k))
