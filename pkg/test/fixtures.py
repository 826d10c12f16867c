from pathlib import Path

from risk_map.catalog import DATA_DIR, AttackVector, Catalog, DefenseMechanism, LayerId
from risk_map.scoring import PlatformAssessment

ASSESSMENT_DIR = DATA_DIR / "assessments"
FIXTURES = ("biped_logistics", "edu_humanoid", "social_companion")
GOLDEN_DIR = Path(__file__).parent / "golden"


def fixture_path(name: str) -> Path:
    return ASSESSMENT_DIR / f"{name}.json"


def two_by_two():
    """
    two attacks, two defenses in two layers; expected values worked by hand:
    omega [0.4, 0.24], kappa [0.59375, 0.375], aggregate 51.171875,
    LayerScore P 1.5625, SP 1.2890625
    """
    catalog = Catalog(
        attacks=(
            AttackVector("P-A1", LayerId.P, "tamper", 0.5, 0.8, 1.0),
            AttackVector("SP-A1", LayerId.SP, "spoof", 0.4, 0.6, 0.5),
        ),
        defenses=(
            DefenseMechanism("P-D1", LayerId.P, "seal"),
            DefenseMechanism("SP-D1", LayerId.SP, "fusion"),
        ),
        gamma=((1.0, 0.25), (0.0, 0.5)),
        version="2x2",
    )
    assessment = PlatformAssessment(
        platform="two-by-two",
        applicability={"P-A1": 1, "SP-A1": 1},
        implementation={"P-D1": 0.5, "SP-D1": 0.75},
    )
    return catalog, assessment
