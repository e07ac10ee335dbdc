import pytest

from passsight.config import ConfigError, build_model, build_safety, merged, read_config
from passsight.kinematics import ModelKind


def test_flat_file_with_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("m_t = 1200  # tractive-axle mass\nlam = 1.0\nL1_s = 2\n")
    values = read_config(path)
    assert values == {"m_t": "1200", "lam": "1.0", "L1_s": "2"}
    model = build_model("dynamic", values)
    assert model.kind is ModelKind.DYNAMIC and model.params.m_t == 1200.0 and model.lam == 1.0
    assert build_safety(values).L1_s == 2.0


def test_flags_override_file_values():
    assert merged({"lam": "0.5", "a_const": "2"}, {"lam": 0.9, "a_max": None}) == {"lam": 0.9, "a_const": "2"}


def test_errors():
    with pytest.raises(ConfigError):
        read_config("/nonexistent/run.cfg")
    with pytest.raises(ConfigError, match="lam"):
        build_model("constant", {"lam": "fast"})
    with pytest.raises(ValueError):
        build_safety({"Lsm_s": "1.0"}, user_bounds=True)
    assert read_config(None) == {}
