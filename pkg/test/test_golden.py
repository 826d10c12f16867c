import json
import unittest

from risk_map.cascade import analyze_cascades, default_coupling
from risk_map.catalog import LayerId, default_catalog
from risk_map.scoring import bind, load_assessment, score_platform
from test.fixtures import FIXTURES, GOLDEN_DIR, fixture_path

TOLERANCE = 1e-9


def golden(name: str) -> dict:
    with open(GOLDEN_DIR / f"{name}.json", "r", encoding="utf-8") as f:
        return json.load(f)


class TestGolden(unittest.TestCase):
    """
    Shipped fixtures against values derived independently by
    test/golden/derive_golden.js
    """

    def close(self, actual, expected, what):
        assert abs(float(actual) - float(expected)) <= TOLERANCE, f"{what}: {actual} != {expected}"

    def check(self, name: str):
        expected = golden(name)
        c = default_catalog()
        a = load_assessment(fixture_path(name))
        b = score_platform(c, a)
        assert b.platform == expected["platform"]

        for key in ("omega", "omega_adjusted", "kappa"):
            values = getattr(b, key)
            assert len(values) == len(expected[key])
            for i, (actual, want) in enumerate(zip(values, expected[key])):
                self.close(actual, want, f"{name} {key}[{i}]")
        self.close(b.aggregate_percent, expected["aggregate_percent"], f"{name} aggregate")
        for layer in LayerId.ordered():
            self.close(b.layer_scores[layer], expected["layer_scores"][layer.code], f"{name} {layer.code}")

        analysis = analyze_cascades(b, bind(c, a).detectability, default_coupling())
        for layer in LayerId.ordered():
            self.close(analysis.coverage[layer], expected["coverage"][layer.code], f"{name} C({layer.code})")
        assert len(analysis.top) == len(expected["top"])
        for risk, want in zip(analysis.top, expected["top"]):
            assert list(risk.path.codes) == want["path"]
            assert risk.attack_id == want["attack"]
            self.close(risk.path.strength, want["P"], f"{name} {risk.key} P")
            self.close(risk.attack_weight, want["w"], f"{name} {risk.key} w")
            self.close(risk.defense_gap, want["U"], f"{name} {risk.key} U")
            self.close(risk.crr, want["crr"], f"{name} {risk.key} crr")
            self.close(risk.cci, want["cci"], f"{name} {risk.key} cci")

    def test_biped_logistics(self):
        self.check("biped_logistics")

    def test_edu_humanoid(self):
        self.check("edu_humanoid")

    def test_social_companion(self):
        self.check("social_companion")

    def test_every_fixture_has_golden_values(self):
        assert sorted(p.stem for p in GOLDEN_DIR.glob("*.json")) == sorted(FIXTURES)
