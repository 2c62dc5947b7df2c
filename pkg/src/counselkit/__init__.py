"""counselkit: an orchestration engine for LLM-based counseling agents.

Layered therapy planning with feedback-driven escalation, implicit client
profiling with phase control, tagged knowledge retrieval, adaptive
empathy/persona response composition, engagement analytics, and a fully
deterministic scripted provider for offline testing.
"""

from .config import EngineConfig, load_config
from .orchestrator import Engine, TurnResult

__all__ = ["Engine", "EngineConfig", "TurnResult", "load_config"]

__version__ = "0.1.0"
