"""Objective evaluation: segmental SNR and interaural cue errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import AudioBuffer, Frame, cross_spectrum

SEG_SNR_FLOOR_DB = -10.0
SEG_SNR_CEIL_DB = 35.0
CROSS_MAG_REL_FLOOR = 1e-10


@dataclass(frozen=True)
class InterauralReport:
    itd_error: float  # normalized phase error in [0, 1]
    ild_error: float  # dB


def segmental_snr(clean: AudioBuffer, processed: AudioBuffer, seg_len: int = 200) -> float:
    """Mean per-segment SNR in dB, each segment clamped to [-10, 35] dB."""
    s = clean.channel("left")
    p = processed.channel("left")
    if len(s) != len(p):
        raise ValueError("buffers must have equal length")
    n_seg = len(s) // seg_len
    if n_seg == 0:
        raise ValueError("signal shorter than one segment")
    vals = []
    for i in range(n_seg):
        seg_s = s[i * seg_len : (i + 1) * seg_len]
        seg_e = seg_s - p[i * seg_len : (i + 1) * seg_len]
        num = float(np.dot(seg_s, seg_s))
        den = float(np.dot(seg_e, seg_e))
        if den == 0.0:
            snr = SEG_SNR_CEIL_DB
        elif num == 0.0:
            snr = SEG_SNR_FLOOR_DB
        else:
            snr = 10.0 * np.log10(num / den)
        vals.append(np.clip(snr, SEG_SNR_FLOOR_DB, SEG_SNR_CEIL_DB))
    return float(np.mean(vals))


def _wrap_phase(phi):
    return (phi + np.pi) % (2.0 * np.pi) - np.pi


def interaural_errors(
    clean_l: AudioBuffer,
    clean_r: AudioBuffer,
    enh_l: AudioBuffer,
    enh_r: AudioBuffer,
    frame_len: int = 256,
) -> InterauralReport:
    """ITD/ILD error of the enhanced pair against the clean pair.

    ITD: mean absolute wrapped phase difference of the per-frame cross
    spectra, normalized by pi; bins whose clean cross magnitude is
    negligible are excluded.  ILD: absolute dB deviation of the channel
    power ratio.
    """
    sigs = [b.channel("left") for b in (clean_l, clean_r, enh_l, enh_r)]
    if len({len(s) for s in sigs}) != 1:
        raise ValueError("all four buffers must have equal length")
    for s in sigs:
        if not np.any(s):
            raise ValueError("zero-power channel: interaural metrics undefined")

    cl, cr, el, er = sigs
    n_frames = len(cl) // frame_len
    if n_frames == 0:
        raise ValueError("signals shorter than one analysis frame")
    phase_errors = []
    for i in range(n_frames):
        sl = slice(i * frame_len, (i + 1) * frame_len)
        c_clean = cross_spectrum(Frame(cl[sl], i), Frame(cr[sl], i))
        c_enh = cross_spectrum(Frame(el[sl], i), Frame(er[sl], i))
        mag = np.abs(c_clean)
        keep = mag > CROSS_MAG_REL_FLOOR * mag.max() if mag.max() > 0 else np.zeros_like(mag, bool)
        if not np.any(keep):
            continue
        dphi = _wrap_phase(np.angle(c_enh[keep]) - np.angle(c_clean[keep]))
        phase_errors.append(np.abs(dphi))
    itd = float(np.mean(np.concatenate(phase_errors)) / np.pi) if phase_errors else 0.0

    i_clean = float(np.dot(cl, cl) / np.dot(cr, cr))
    i_enh = float(np.dot(el, el) / np.dot(er, er))
    ild = float(abs(10.0 * np.log10(i_enh / i_clean)))
    return InterauralReport(itd_error=itd, ild_error=ild)
