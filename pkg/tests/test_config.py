import math

import numpy as np
import pytest

from lzdfs.config import ConfigError, parse_config, render_config


def test_types_and_comments():
    cfg = parse_config(
        """
        # comment
        scenario = perturbed-noise
        delta1 = pi/36   # trailing
        delta2 = -pi/18
        gamma_points = 7
        text_couplings = yes
        noise_couplings = 0.5, 0.5; 0.5, 0.5
        """
    )
    assert cfg["scenario"] == "perturbed-noise"
    assert cfg["delta1"] == pytest.approx(math.pi / 36)
    assert cfg["delta2"] == pytest.approx(-math.pi / 18)
    assert cfg["gamma_points"] == 7 and cfg["text_couplings"] is True
    assert np.array_equal(cfg["noise_couplings"], np.full((2, 2), 0.5))


def test_complex_matrix():
    cfg = parse_config("couplings = 1+2j, 0; 0, 1")
    assert cfg["couplings"][0, 0] == 1 + 2j


@pytest.mark.parametrize(
    "text, key",
    [("colour = red", "colour"), ("gamma = fast", "gamma"), ("gamma = 1\ngamma = 2", "gamma"), ("gamma 1", "gamma")],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_render_roundtrip():
    cfg = parse_config("delta1 = pi/9\nnoise_couplings = 0.1, -0.2\nscenario = custom\ntext_couplings = false")
    again = parse_config(render_config(cfg))
    assert again["delta1"] == cfg["delta1"] and again["text_couplings"] is False
    assert np.array_equal(again["noise_couplings"], cfg["noise_couplings"])
