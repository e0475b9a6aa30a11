"""Inference state machine: engine, answerers, and HTTP service."""

from .answerers import Answerer, LlmAnswerer, ScriptRule, ScriptedAnswerer
from .engine import (
    ErrorEntry,
    FlowConfig,
    LEGAL_EDGES,
    Phase,
    SessionState,
    StepResult,
    TraceEntry,
    VerifyOutcome,
    init_session,
    recognize_intent,
    solve,
    step,
    verify,
)
from .service import create_app

__all__ = [
    "Answerer",
    "ErrorEntry",
    "FlowConfig",
    "LEGAL_EDGES",
    "LlmAnswerer",
    "Phase",
    "ScriptRule",
    "ScriptedAnswerer",
    "SessionState",
    "StepResult",
    "TraceEntry",
    "VerifyOutcome",
    "create_app",
    "init_session",
    "recognize_intent",
    "solve",
    "step",
    "verify",
]
