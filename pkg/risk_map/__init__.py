# Copyright 2024 The risk-map authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


from .app import create_app
from .cascade import (
    CascadeConfig,
    CascadePath,
    CascadeRisk,
    CouplingInputs,
    LayerCoverageVector,
    analyze_cascades,
    cascade_residual_risk,
    coupling_matrix,
    default_coupling,
    enumerate_two_hop_paths,
    load_coupling,
    top_k_cascades,
)
from .catalog import AttackVector, Catalog, DefenseMechanism, LayerId, default_catalog, load_catalog
from .errors import RiskMapError
from .report import AssessmentReport, DeltaReport, build_report, emit_json, parse_report, whatif
from .scoring import PlatformAssessment, ScoreBreakdown, load_assessment, score_platform
from .serialize import RiskMapSerializeMixin
from .uncertainty import DistributionSummary, McConfig, NoiseSpec, run_monte_carlo

__all__ = (
    "AssessmentReport",
    "AttackVector",
    "CascadeConfig",
    "CascadePath",
    "CascadeRisk",
    "Catalog",
    "CouplingInputs",
    "DefenseMechanism",
    "DeltaReport",
    "DistributionSummary",
    "LayerCoverageVector",
    "LayerId",
    "McConfig",
    "NoiseSpec",
    "PlatformAssessment",
    "RiskMapError",
    "RiskMapSerializeMixin",
    "ScoreBreakdown",
    "analyze_cascades",
    "build_report",
    "cascade_residual_risk",
    "coupling_matrix",
    "create_app",
    "default_catalog",
    "default_coupling",
    "emit_json",
    "enumerate_two_hop_paths",
    "load_assessment",
    "load_catalog",
    "load_coupling",
    "parse_report",
    "run_monte_carlo",
    "score_platform",
    "top_k_cascades",
    "whatif",
)
__package__ = "risk_map"
