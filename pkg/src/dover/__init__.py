"""DoVer: do-then-verify debugging for multi-agent LLM sessions."""

__version__ = "0.1.0"
