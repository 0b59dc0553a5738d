import numpy as np
import pytest

import qsmlab


def test_kernel_dc_and_range():
    D = qsmlab.dipole_kernel((8, 8, 8))
    assert D.shape == (8, 8, 8)
    assert D[0, 0, 0] == 0.0
    assert D.min() >= -2.0 / 3.0 - 1e-12 and D.max() <= 1.0 / 3.0 + 1e-12
    # along z the kernel is 1/3 - 1 = -2/3
    assert D[0, 0, 1] == pytest.approx(-2.0 / 3.0)


def test_forward_field_matches_numpy_fft():
    rng = np.random.default_rng(0)
    chi = rng.normal(size=(6, 8, 4))
    D = qsmlab.dipole_kernel(chi.shape)
    expected = np.real(np.fft.ifftn(D * np.fft.fftn(chi)))
    np.testing.assert_allclose(qsmlab.forward_field(chi), expected, atol=1e-12)


def test_sphere_field_on_axis():
    b = qsmlab.sphere_field((32, 32, 32), (16, 16, 16), 4.0, 0.1)
    assert b[16, 16, 24] == pytest.approx(0.1 / 3 / 8 * 2, abs=1e-15)


def test_phantom_and_metrics():
    spec = {
        "dims": [16, 16, 16],
        "primitives": [{"shape": "sphere", "center": [8, 8, 8], "size": [4], "delta_chi": 0.1}],
    }
    p = qsmlab.phantom(spec)
    chi = p["chi"]
    assert chi.max() == pytest.approx(0.1)
    assert qsmlab.ssim(chi, chi) == 1.0
    assert qsmlab.hfen(chi, chi) == 0.0
    assert qsmlab.rmse(np.zeros_like(chi), chi) == pytest.approx(100.0)
    assert qsmlab.rmse(1.1 * chi, chi) == pytest.approx(10.0)


def test_corpus_and_medi_beat_zero():
    members = qsmlab.corpus(6, (32, 32, 16), seed=4)
    assert [m["split"] for m in members].count("test") == 1
    m = members[0]
    chi, trace = qsmlab.medi(m["field"], m["noise_sigma"], lam=30.0)
    objectives = [t["objective"] for t in trace]
    assert all(b <= a for a, b in zip(objectives, objectives[1:]))
    assert qsmlab.rmse(chi, m["chi"], m["tissue_mask"]) < 100.0


def test_qvol_round_trip(tmp_path):
    a = np.arange(24, dtype=float).reshape(2, 3, 4)
    qsmlab.save_volume(tmp_path / "v", a, (1.0, 1.0, 2.0), role="susceptibility")
    back, vs = qsmlab.load_volume(tmp_path / "v")
    np.testing.assert_array_equal(back, a)
    assert vs == [1.0, 1.0, 2.0]


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(qsmlab.IoError):
        qsmlab.load_volume(tmp_path / "missing")
    with pytest.raises(ValueError):
        qsmlab.forward_field(np.zeros((4, 4)))
    with pytest.raises(qsmlab.ConfigError):
        qsmlab.lesion_phantom({"delta_chi": 0.2}, (64, 64, 32))
    with pytest.raises(qsmlab.IoError):
        qsmlab.Model.load(tmp_path / "no_model")
