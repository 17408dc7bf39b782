"""Multi-agent TRIZ problem solving: a supervised team of language agents
works through a six-step TRIZ workflow and documents every step."""

__version__ = "0.1.0"
