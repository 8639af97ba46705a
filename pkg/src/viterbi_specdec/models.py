"""
Pydantic models for command and tool outputs.

BenchRecord field order is the bench CSV column order.
"""

from pydantic import BaseModel, Field

from .config import DecodeMode

BENCH_HEADER = (
    "n",
    "k",
    "mode",
    "seed",
    "trial",
    "invocations",
    "m_mean",
    "viterbi_ops",
    "us_source",
    "us_reduce",
    "us_viterbi",
)


# =============================================================================
# Bench Models
# =============================================================================


class BenchRecord(BaseModel):
    """One (n, k, mode, trial) measurement."""

    n: int = Field(ge=1, description="Prediction heads")
    k: int = Field(ge=1, description="Top-k per head")
    mode: DecodeMode = Field(description="Path selection mode")
    seed: int = Field(description="Trial seed")
    trial: int = Field(ge=0, description="Trial index")
    invocations: int = Field(ge=1, description="Head source invocations")
    m_mean: float = Field(ge=0, description="Mean candidate count per step")
    viterbi_ops: int = Field(ge=0, description="Sum of (n-1)*m^2 over steps")
    us_source: int = Field(ge=0, description="Head source time (microseconds)")
    us_reduce: int = Field(ge=0, description="Reduction time (microseconds)")
    us_viterbi: int = Field(ge=0, description="Path selection time (microseconds)")

    def sort_key(self) -> tuple[int, int, str, int]:
        return (self.n, self.k, self.mode.value, self.trial)

    def csv_row(self) -> list[str]:
        values = self.model_dump(mode="json")
        return [_csv_value(values[name]) for name in BENCH_HEADER]


def _csv_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


# =============================================================================
# Tool Response Models
# =============================================================================


class TransitionInfoResponse(BaseModel):
    """Summary of a transition file."""

    path: str
    vocab: int = Field(description="Vocabulary size V")
    alpha: float = Field(description="Smoothing constant used at estimation")
    min_entry: float = Field(description="Smallest Q entry")
    max_row_error: float = Field(description="Largest |row sum - 1|")
    notes: list[str] = Field(default_factory=list, max_length=6)


class SessionResponse(BaseModel):
    """Result of one decode session."""

    n: int
    k: int
    mode: DecodeMode
    seed: int
    length: int
    invocations: int
    m_mean: float
    viterbi_ops: int
    mean_log_likelihood: float = Field(description="Per-token log-likelihood of generated tokens")
    us_source: int
    us_reduce: int
    us_viterbi: int
    tokens: list[int] = Field(max_length=256, description="Generated tokens (truncated to 256)")
    notes: list[str] = Field(default_factory=list, max_length=6)


class ErrorResponse(BaseModel):
    """Standard error response."""

    error: bool = True
    code: int = Field(description="Error code (1 input, 2 internal)")
    message: str = Field(description="Error message")
    notes: list[str] = Field(default_factory=list, max_length=6)
