import pytest

from config import CONFIG_ECHO_NAME, DEFAULT_CONFIG, format_config, load_config, parse_config_text, write_config_echo
from errors import ConfigError


def test_defaults_without_file():
    config = load_config()
    assert config == DEFAULT_CONFIG
    assert config is not DEFAULT_CONFIG
    assert config["n_utterances"] == 200 and config["mel_bins"] == 8


def test_parse_skips_comments_and_blank_lines():
    text = "# corpus\n\nn_speakers = 4   # small\nf0_mean_over = voiced\nlearning_rate = 2e-3\nactnorm_data_init = false\n"
    assert parse_config_text(text) == {
        "n_speakers": 4, "f0_mean_over": "voiced", "learning_rate": 2e-3, "actnorm_data_init": False,
    }


def test_integer_accepted_for_float_key():
    value = parse_config_text("temperature = 1")["temperature"]
    assert value == 1.0 and isinstance(value, float)


def test_later_lines_override_earlier():
    assert parse_config_text("epochs = 3\nepochs = 0\n") == {"epochs": 0}


@pytest.mark.parametrize("text", ["n_speakers = 2.5", "epochs = true", "actnorm_data_init = 1", "learning_rate = fast"])
def test_wrong_type_rejected(text):
    with pytest.raises(ConfigError, match=text.split(" ")[0]):
        parse_config_text(text)


def test_unknown_key_named_in_error(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("seed = 1\nflow_stepz = 4\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="flow_stepz.*line 2"):
        load_config(str(path))
    with pytest.raises(ConfigError, match="bogus"):
        load_config(bogus=1)


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="Line 1"):
        parse_config_text("epochs 3")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(str(tmp_path / "nope.conf"))


def test_keyword_overrides_win_over_file(config_file):
    config = load_config(config_file, epochs=7)
    assert config["epochs"] == 7
    assert config["n_speakers"] == 4


def test_echo_reloads_to_same_config(tmp_path):
    config = load_config(f0_mean_over="voiced", epochs=3, learning_rate=5e-4)
    echo_path = write_config_echo(config, str(tmp_path / "run"))
    assert echo_path.endswith(CONFIG_ECHO_NAME)
    assert load_config(echo_path) == config
    lines = format_config(config).splitlines()
    assert lines == sorted(lines)
    assert 'f0_mean_over = "voiced"' in lines
