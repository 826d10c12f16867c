import dataclasses
import json
import random
import unittest

import numpy as np
from hypothesis import assume, given, settings, strategies as st

from risk_map.catalog import Catalog, DefenseMechanism, LayerId, default_catalog
from risk_map.errors import BindError, DomainError, LengthMismatch, NoApplicableThreats, ValidationError
from risk_map.scoring import (
    adjusted_severity,
    bind,
    effective_coverage,
    emit_assessment,
    key_findings,
    layer_scores,
    lint_assessment,
    load_assessment,
    riskmap_score,
    score_platform,
    severity,
    total_coverage,
)
from test import oracle
from test.fixtures import FIXTURES, fixture_path, two_by_two

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestFormulas(unittest.TestCase):
    def test_severity(self):
        assert severity(0.5, 0.8) == 0.4
        assert severity(0.0, 1.0) == 0.0
        assert list(severity([0.5, 1.0], [0.5, 0.2])) == [0.25, 0.2]

    def test_severity_domain(self):
        with self.assertRaises(DomainError):
            severity(1.2, 0.5)
        with self.assertRaises(DomainError):
            severity(0.5, -0.1)
        with self.assertRaises(DomainError):
            severity(float("nan"), 0.5)
        with self.assertRaises(LengthMismatch):
            severity([0.5, 0.5], [0.5])

    def test_adjusted_severity(self):
        assert list(adjusted_severity([0.4, 0.3], [1, 0])) == [0.4, 0.0]
        with self.assertRaises(LengthMismatch):
            adjusted_severity([0.4, 0.3], [1])

    def test_effective_coverage(self):
        eps = effective_coverage([[1.0, 0.5], [0.25, 0.0]], [0.5, 1.0])
        assert eps.tolist() == [[0.5, 0.5], [0.125, 0.0]]
        with self.assertRaises(LengthMismatch):
            effective_coverage([[1.0, 0.5]], [0.5])

    def test_total_coverage(self):
        assert total_coverage([0.5, 0.5]) == 0.75
        assert total_coverage([]) == 0.0
        assert total_coverage([0.0, 0.0]) == 0.0
        assert total_coverage([1.0, 0.3]) == 1.0
        assert abs(total_coverage([0.5, 0.25, 0.75]) - (1 - 0.5 * 0.75 * 0.25)) < 1e-15
        with self.assertRaises(DomainError):
            total_coverage([0.5, 1.5])

    @given(st.lists(unit, min_size=1, max_size=3), st.integers(min_value=0, max_value=6))
    @settings(max_examples=1000, deadline=None)
    def test_product_form_matches_inclusion_exclusion(self, eps, zeros):
        row = eps + [0.0] * zeros
        assert abs(total_coverage(row) - oracle.inclusion_exclusion(eps)) <= 1e-12

    @given(st.lists(unit, max_size=8), st.integers(min_value=0, max_value=8))
    @settings(max_examples=300, deadline=None)
    def test_any_full_coverage_is_total(self, eps, at):
        row = list(eps)
        row.insert(min(at, len(row)), 1.0)
        assert total_coverage(row) == 1.0

    def test_riskmap_score(self):
        assert riskmap_score([0.5, 0.5], [1.0, 0.0]) == 50.0
        assert riskmap_score([0.0, 0.5], [0.0, 0.2]) == 20.0
        with self.assertRaises(NoApplicableThreats):
            riskmap_score([0.0, 0.0], [0.5, 0.5])
        with self.assertRaises(LengthMismatch):
            riskmap_score([0.5], [0.5, 0.5])

    def test_layer_scores_partition_checked(self):
        with self.assertRaises(DomainError):
            layer_scores([0.5], [[0.5, 0.5]], {LayerId.P: [0]})
        with self.assertRaises(DomainError):
            layer_scores([0.5], [[0.5, 0.5]], {LayerId.P: [0, 1], LayerId.SP: [1]})


class TestTwoByTwo(unittest.TestCase):
    def setUp(self):
        self.catalog, self.assessment = two_by_two()
        self.breakdown = score_platform(self.catalog, self.assessment)

    def test_hand_values(self):
        b = self.breakdown
        self.assertAlmostEqual(b.omega[0], 0.4, places=15)
        self.assertAlmostEqual(b.omega[1], 0.24, places=15)
        self.assertAlmostEqual(b.kappa[0], 0.59375, places=15)
        self.assertAlmostEqual(b.kappa[1], 0.375, places=15)
        self.assertAlmostEqual(b.aggregate_percent, 51.171875, places=12)
        self.assertAlmostEqual(b.layer_scores[LayerId.P], 1.5625, places=12)
        self.assertAlmostEqual(b.layer_scores[LayerId.SP], 1.2890625, places=12)
        for layer in (LayerId.DP, LayerId.MW, LayerId.DM, LayerId.AP, LayerId.SI):
            assert b.layer_scores[layer] == 0.0

    def test_inapplicable_attack(self):
        a = dataclasses.replace(self.assessment, applicability={"P-A1": 0, "SP-A1": 1})
        b = score_platform(self.catalog, a)
        assert b.omega_adjusted[0] == 0.0
        self.assertAlmostEqual(b.aggregate_percent, 37.5, places=12)

    def test_no_applicable_threats(self):
        a = dataclasses.replace(self.assessment, applicability={"P-A1": 0, "SP-A1": 0})
        with self.assertRaises(NoApplicableThreats):
            score_platform(self.catalog, a)

    def test_residual(self):
        b = self.breakdown
        for i in range(2):
            assert b.residual[i] == b.omega_adjusted[i] * (1.0 - b.kappa[i])

    def test_key_findings(self):
        findings = key_findings(self.breakdown, n=2)
        assert [code for code, _ in findings.strengths] == ["P", "SP"]
        assert [attack_id for attack_id, _ in findings.vulnerabilities] == ["P-A1", "SP-A1"]

    def test_breakdown_round_trip(self):
        again = type(self.breakdown).rm_from_dict(json.loads(self.breakdown.rm_as_json))
        assert again.rm_as_json == self.breakdown.rm_as_json


class TestBind(unittest.TestCase):
    def setUp(self):
        self.catalog, self.assessment = two_by_two()

    def test_missing_and_extra(self):
        a = dataclasses.replace(
            self.assessment,
            applicability={"P-A1": 1, "XX-A9": 1},
            implementation={"P-D1": 0.5, "SP-D1": 0.75, "SP-D9": 0.5},
        )
        with self.assertRaises(BindError) as e:
            bind(self.catalog, a)
        assert e.exception.missing == ["SP-A1"]
        assert e.exception.extra == ["SP-D9", "XX-A9"]

    def test_invalid_level(self):
        a = self.assessment.with_implementation({"P-D1": 0.3})
        with self.assertRaises(BindError) as e:
            bind(self.catalog, a)
        assert e.exception.invalid == ["implementation P-D1=0.3"]
        assert bind(self.catalog, a, allow_continuous=True).implementation.tolist() == [0.3, 0.75]

    def test_overrides(self):
        a = dataclasses.replace(self.assessment, overrides={"SP-A1": {"impact": 1.0}})
        bound = bind(self.catalog, a)
        assert bound.impact.tolist() == [0.8, 1.0]
        assert bound.likelihood.tolist() == [0.5, 0.4]
        assert bound.detectability.tolist() == [1.0, 0.5]

    def test_with_implementation_copies(self):
        a = self.assessment.with_implementation({"P-D1": 1.0})
        assert a.implementation["P-D1"] == 1.0
        assert self.assessment.implementation["P-D1"] == 0.5


class TestAssessmentFiles(unittest.TestCase):
    def test_fixtures_load_and_score(self):
        for name in FIXTURES:
            a = load_assessment(fixture_path(name))
            b = score_platform(default_catalog(), a)
            assert 0.0 <= b.aggregate_percent <= 100.0, name

    def test_round_trip(self):
        for name in FIXTURES:
            a = load_assessment(fixture_path(name))
            again = load_assessment(emit_assessment(a))
            assert again.fingerprint == a.fingerprint
            assert again.overrides == a.overrides

    def test_lint_codes(self):
        with open(fixture_path("edu_humanoid"), "r", encoding="utf-8") as f:
            data = json.load(f)
        data["implementation"]["P-D1"] = 0.3
        data["implementation"]["P-D2"] = 1.5
        data["overrides"]["AP-A2"]["impact"] = 0.5
        _, report = lint_assessment(json.dumps(data).encode("utf-8"))
        assert sorted(report.codes) == ["IMPACT_LEVEL", "MU_LEVEL", "MU_RANGE"]
        with self.assertRaises(ValidationError):
            load_assessment(json.dumps(data).encode("utf-8"))

    def test_schema_rejects_fractional_applicability(self):
        with open(fixture_path("edu_humanoid"), "r", encoding="utf-8") as f:
            data = json.load(f)
        data["applicability"]["P-A1"] = 0.5
        assessment, report = lint_assessment(json.dumps(data).encode("utf-8"))
        assert assessment is None
        assert report.codes == ["SCHEMA"]


class TestOracle(unittest.TestCase):
    def test_random_cases_match_oracle(self):
        rnd = random.Random(20240517)
        for case in range(1000):
            catalog, assessment, plain = oracle.random_case(rnd)
            b = score_platform(catalog, assessment, allow_continuous=True)
            expected = oracle.score(**plain)
            for got, want in zip(b.omega_adjusted, expected["omega_adjusted"]):
                assert abs(got - want) <= 1e-12, case
            for got, want in zip(b.kappa, expected["kappa"]):
                assert abs(got - want) <= 1e-12, case
            assert abs(b.aggregate_percent - expected["aggregate_percent"]) <= 1e-12, case
            for layer in LayerId.ordered():
                assert abs(b.layer_scores[layer] - expected["layer_scores"][layer.code]) <= 1e-12, case


class TestProperties(unittest.TestCase):
    @given(seeds)
    @settings(max_examples=1000, deadline=None)
    def test_bounds(self, seed):
        catalog, assessment, _ = oracle.random_case(random.Random(seed))
        b = score_platform(catalog, assessment, allow_continuous=True)
        assert 0.0 <= b.aggregate_percent <= 100.0
        for score in b.layer_scores.values():
            assert 0.0 <= score <= 5.0
        assert np.all((b.kappa >= 0.0) & (b.kappa <= 1.0))

    @given(seeds, st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=1000, deadline=None)
    def test_monotone_in_implementation(self, seed, t):
        rnd = random.Random(seed)
        catalog, assessment, _ = oracle.random_case(rnd)
        defense_id = rnd.choice(catalog.defense_ids)
        current = assessment.implementation[defense_id]
        raised = assessment.with_implementation({defense_id: current + (1.0 - current) * t})
        before = score_platform(catalog, assessment, allow_continuous=True)
        after = score_platform(catalog, raised, allow_continuous=True)
        assert after.aggregate_percent >= before.aggregate_percent
        for layer in LayerId.ordered():
            assert after.layer_scores[layer] >= before.layer_scores[layer]

    @given(seeds)
    @settings(max_examples=1000, deadline=None)
    def test_inapplicable_attack_is_masked(self, seed):
        rnd = random.Random(seed)
        catalog, assessment, _ = oracle.random_case(rnd)
        masked = [i for i, a in enumerate(catalog.attacks) if assessment.applicability[a.id] == 0]
        assume(masked)
        i = rnd.choice(masked)
        attacks = list(catalog.attacks)
        attacks[i] = dataclasses.replace(attacks[i], likelihood=rnd.random(), impact=rnd.random())
        gamma = list(catalog.gamma)
        gamma[i] = tuple(rnd.random() for _ in catalog.defenses)
        changed = dataclasses.replace(catalog, attacks=tuple(attacks), gamma=tuple(gamma))
        before = score_platform(catalog, assessment, allow_continuous=True)
        after = score_platform(changed, assessment, allow_continuous=True)
        assert after.aggregate_percent == before.aggregate_percent
        assert after.layer_scores == before.layer_scores

    @given(seeds)
    @settings(max_examples=1000, deadline=None)
    def test_layer_coverage_never_exceeds_total(self, seed):
        catalog, assessment, _ = oracle.random_case(random.Random(seed))
        b = score_platform(catalog, assessment, allow_continuous=True)
        for layer, restricted in b.layer_kappa.items():
            # a slice of a row is summed in a different association than the row
            assert np.all(restricted <= b.kappa + 1e-12), layer.code

    def test_fixture_layer_coverage_never_exceeds_total(self):
        catalog = default_catalog()
        for name in FIXTURES:
            b = score_platform(catalog, load_assessment(fixture_path(name)))
            for layer, restricted in b.layer_kappa.items():
                assert restricted.shape == b.kappa.shape
                assert np.all(restricted <= b.kappa + 1e-12), (name, layer.code)

    @given(seeds, st.sampled_from(LayerId.ordered()))
    @settings(max_examples=1000, deadline=None)
    def test_single_layer_matches_aggregate(self, seed, layer):
        catalog, assessment, _ = oracle.random_case(random.Random(seed))
        defenses = tuple(
            DefenseMechanism(f"{layer.code}-D{j + 1}", layer, d.name) for j, d in enumerate(catalog.defenses)
        )
        renamed = Catalog(attacks=catalog.attacks, defenses=defenses, gamma=catalog.gamma, version="one-layer")
        assessment = dataclasses.replace(
            assessment,
            implementation={
                new.id: assessment.implementation[old.id] for new, old in zip(defenses, catalog.defenses)
            },
        )
        b = score_platform(renamed, assessment, allow_continuous=True)
        assert b.layer_scores[layer] * 20.0 == b.aggregate_percent
        for other in LayerId.ordered():
            if other is not layer:
                assert b.layer_scores[other] == 0.0

