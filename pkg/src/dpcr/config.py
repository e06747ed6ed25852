"""Run configuration: defaults, a flat ``key=value`` file format and merging."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import ParseError

_LIST_FIELDS = {"data", "sexes"}


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by the subcommands.

    Attributes
    ----------
    data : list of str
        Dataset sources: a CSV written by ``ingest``/``smooth`` or
        ``bundled:<CODE>`` for a shipped snapshot.
    sexes : list of str
        Series to process (``female``, ``male``, ``total``).
    method : str
        ``lc`` (Lee-Carter) or ``fts`` (functional time series on smoothed data);
        ``fts_raw`` runs FTS on unsmoothed improvements.
    centering : bool
        LC only: remove the mean curve and centre kappa.
    mode : str
        ``static`` (variance) or ``dynamic`` (long-run covariance).
    bandwidth : str
        ``auto`` for the plug-in rule, or a positive number.
    h1 : str
        Pilot bandwidth for the plug-in rule; ``auto`` is ``n ** (1/5)``.
    threshold : float
        Explained-share threshold for the number of components.
    lam : str
        Smoothing penalty; ``auto`` selects it per year by cross-validation.
    alpha : float
        Interval miss rate; intervals have level ``1 - alpha``.
    B : int
        Bootstrap replications.
    seed : int
    holdout : int
        Number of evaluation windows.
    horizon : int
    out : str
        Output directory.
    """

    data: list[str] = field(default_factory=lambda: ["bundled:USA"])
    sexes: list[str] = field(default_factory=lambda: ["female"])
    method: str = "lc"
    centering: bool = True
    mode: str = "dynamic"
    bandwidth: str = "auto"
    h1: str = "auto"
    threshold: float = 0.85
    lam: str = "auto"
    alpha: float = 0.2
    B: int = 1000
    seed: int = 0
    holdout: int = 30
    horizon: int = 1
    out: str = "dpcr_out"

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _LIST_FIELDS:
                v = ",".join(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        return (base or cls()).merged(parse_config(text))

    def merged(self, values: dict) -> "RunConfig":
        return replace(self, **{k: coerce(k, v) for k, v in values.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, value):
    """Convert a raw value (string from a file or flag) to the field's type."""
    if key not in _TYPES:
        raise ParseError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if not isinstance(value, str):
        return list(value) if key in _LIST_FIELDS else value
    value = value.strip()
    try:
        if key in _LIST_FIELDS:
            return [v.strip() for v in value.split(",") if v.strip()]
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ParseError(f"bad value for {key}: {value!r}") from None
    return value


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ParseError(f"unknown config key {key!r}", lineno)
        out[key] = value
    return out
