# -*- coding: utf-8 -*-
from typing import Any, Dict, List, Union

__all__ = ["SurveyRecord", "Persona", "RiskPerception", "PandemicContext",
           "ControlMeasures", "EpidemicCondition", "Exemplar",
           "StaticResponse", "DynamicResponse", "CompletionRequest",
           "CompletionResult", "BackendConfig", "SimConfig",
           "BehaviorProfile", "Transition", "StrategySpec",
           "ValidationReport", "GridSpec", "Settings", "Configuration",
           "Experiment", "Lexicon", "Record"]


Record = Dict[str, Any]

SurveyRecord = Dict[str, Any]
Persona = Dict[str, Any]
RiskPerception = Dict[str, Any]

PandemicContext = Dict[str, Any]
ControlMeasures = Dict[str, Any]
EpidemicCondition = Dict[str, Any]

Exemplar = Dict[str, Any]
StaticResponse = Dict[str, Dict[str, Any]]
DynamicResponse = Dict[str, Any]

CompletionRequest = Dict[str, Any]
CompletionResult = Dict[str, Any]
BackendConfig = Dict[str, Any]

SimConfig = Dict[str, Any]
BehaviorProfile = Dict[str, Any]
Transition = Dict[str, Any]

StrategySpec = Dict[str, Any]
ValidationReport = Dict[str, Any]
GridSpec = Dict[str, Any]

Settings = Dict[str, Any]
Configuration = Dict[str, Union[str, Dict[str, str]]]
Experiment = Dict[str, Any]

Lexicon = Dict[str, List[str]]
