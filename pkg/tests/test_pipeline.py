import numpy as np
import pytest

from binse.linpred import ArModel
from binse.pipeline import FrameDiagnostics, RunConfig, process, process_single
from binse.signal_core import AudioBuffer

from conftest import ar_signal, codebook_from_models, snr_scale

SPEECH_MODELS = [
    ArModel(np.array([1.2, -0.8, 0.3, -0.1])),
    ArModel(np.array([-1.2, -0.8, -0.3, -0.1])),
    ArModel(np.array([0.5, 0.2, 0.0, 0.0])),
]
NOISE_MODELS = [
    ArModel(np.array([0.0, 0.0])),
    ArModel(np.array([-0.5, -0.2])),
]


def make_scene(rng, n=2000, snr_db=5.0, decorrelate=False):
    s = ar_signal(SPEECH_MODELS[0].coefficients, 1e-3, n, rng)
    nl = ar_signal(NOISE_MODELS[1].coefficients, 1e-3, n, rng)
    nr = ar_signal(NOISE_MODELS[1].coefficients, 1e-3, n, rng) if decorrelate else nl
    g = snr_scale(s, nl, snr_db)
    zl = AudioBuffer(s + g * nl, 8000)
    zr = AudioBuffer(s + g * nr, 8000)
    return s, zl, zr


def fast_cfg(**kw):
    defaults = dict(mode="binaural", model="uv")
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture
def codebooks():
    return (
        codebook_from_models(SPEECH_MODELS, "speech"),
        codebook_from_models(NOISE_MODELS, "noise"),
    )


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.sample_rate == 8000
        assert cfg.frame_len == 200
        assert cfg.speech_order == cfg.noise_order == 14
        assert cfg.smoother_delay == 25
        assert (cfg.f_min, cfg.f_max, cfg.pitch_grid_hz) == (80.0, 400.0, 0.5)
        assert cfg.p_max == 100

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(mode="stereo")
        with pytest.raises(ValueError):
            RunConfig(model="hmm")
        with pytest.raises(ValueError):
            RunConfig(smoother_delay=5, speech_order=14)
        with pytest.raises(ValueError):
            RunConfig(frame_len=201)


class TestProcess:
    def test_swap_symmetry(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, decorrelate=True)
        cfg = fast_cfg()
        a_l, a_r = process(zl, zr, scb, ncb, cfg)
        b_l, b_r = process(zr, zl, scb, ncb, cfg)
        np.testing.assert_allclose(a_l.samples, b_r.samples, atol=1e-10)
        np.testing.assert_allclose(a_r.samples, b_l.samples, atol=1e-10)

    def test_bilateral_equals_binaural_on_identical_channels(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, _ = make_scene(rng)
        bin_cfg = fast_cfg(mode="binaural", adaptive_noise_codebook=False)
        bil_cfg = fast_cfg(mode="bilateral", adaptive_noise_codebook=False)
        a_l, a_r = process(zl, zl, scb, ncb, bin_cfg)
        b_l, b_r = process(zl, zl, scb, ncb, bil_cfg)
        np.testing.assert_allclose(a_l.samples, b_l.samples, atol=1e-10)
        np.testing.assert_allclose(a_l.samples, a_r.samples, atol=1e-12)

    def test_determinism(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, decorrelate=True)
        cfg = fast_cfg()
        a = process(zl, zr, scb, ncb, cfg)
        b = process(zl, zr, scb, ncb, cfg)
        np.testing.assert_array_equal(a[0].samples, b[0].samples)
        np.testing.assert_array_equal(a[1].samples, b[1].samples)

    def test_output_length_and_rate(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, n=1000)
        out_l, out_r = process(zl, zr, scb, ncb, fast_cfg())
        assert len(out_l) == len(zl) and len(out_r) == len(zr)
        assert out_l.sample_rate == 8000

    def test_length_mismatch(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, _ = make_scene(rng, n=1000)
        zr = AudioBuffer(np.zeros(800), 8000)
        with pytest.raises(ValueError):
            process(zl, zr, scb, ncb, fast_cfg())

    def test_rate_mismatch(self, rng, codebooks):
        scb, ncb = codebooks
        z = AudioBuffer(np.zeros(1000), 16000)
        with pytest.raises(ValueError):
            process(z, z, scb, ncb, fast_cfg())

    def test_diagnostics_lines(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, n=1000)
        diags = []
        process(zl, zr, scb, ncb, fast_cfg(), diagnostics_out=diags)
        assert len(diags) == 5
        line = diags[0].csv_line()
        parts = line.split(",")
        assert len(parts) == 6
        assert parts[0] == "0"

    def test_binaural_param_accuracy_vs_bilateral(self, rng, codebooks):
        # Binaural estimation sees both channels; with independent noise
        # realizations its parameter error should not exceed bilateral's.
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, n=4000, snr_db=3.0, decorrelate=True)
        diag_bin, diag_bil = [], []
        process(zl, zr, scb, ncb,
                fast_cfg(adaptive_noise_codebook=False), diagnostics_out=diag_bin)
        process(zl, zr, scb, ncb,
                fast_cfg(mode="bilateral", adaptive_noise_codebook=False),
                diagnostics_out=diag_bil)
        hits_bin = sum(d.best_speech_index == 0 for d in diag_bin)
        hits_bil = sum(d.best_speech_index == 0 for d in diag_bil)
        assert hits_bin >= hits_bil

    def test_vuv_model_runs(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, zr = make_scene(rng, n=1000)
        cfg = fast_cfg(model="vuv", f_min=90.0, f_max=120.0, max_harmonic_order=8)
        out_l, out_r = process(zl, zr, scb, ncb, cfg)
        assert len(out_l) == len(zl)

    def test_enhancement_improves_snr(self, rng, codebooks):
        from binse.metrics import segmental_snr

        scb, ncb = codebooks
        s, zl, zr = make_scene(rng, n=4000, snr_db=3.0, decorrelate=True)
        out_l, _ = process(zl, zr, scb, ncb, fast_cfg())
        clean = AudioBuffer(s, 8000)
        assert segmental_snr(clean, out_l) > segmental_snr(clean, zl)


class TestProcessSingle:
    def test_runs_and_preserves_length(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, _ = make_scene(rng, n=1000)
        out = process_single(zl, scb, ncb, fast_cfg())
        assert len(out) == len(zl)

    def test_rejects_stereo(self, rng, codebooks):
        scb, ncb = codebooks
        z = AudioBuffer(np.zeros((2, 1000)), 8000)
        with pytest.raises(ValueError):
            process_single(z, scb, ncb, fast_cfg())

    def test_matches_bilateral_channel(self, rng, codebooks):
        scb, ncb = codebooks
        _, zl, _ = make_scene(rng, n=1000)
        cfg = fast_cfg(mode="bilateral", adaptive_noise_codebook=False)
        out_pair = process(zl, zl, scb, ncb, cfg)
        out_single = process_single(zl, scb, ncb, cfg)
        np.testing.assert_allclose(out_single.samples, out_pair[0].samples, atol=1e-10)
