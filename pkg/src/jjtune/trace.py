"""Resistance traces: the exchange format between simulator, fitter and CLI.

CSV schema: header ``time_s,resistance_ohm,temperature_K,phase``, UTF-8,
``.`` decimal separator.  Metadata rides in leading ``# key=value`` comment
lines and survives a round trip.
"""

import csv
import io
from dataclasses import dataclass, field

from .errors import TraceFormatError

PHASE_LABELS = ("idle", "drop", "active", "relax", "probe", "failed")
CSV_HEADER = ("time_s", "resistance_ohm", "temperature_K", "phase")


@dataclass
class TraceSample:
    t: float
    r: float
    temperature: float
    phase: str


@dataclass
class ResistanceTrace:
    samples: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t, r, temperature, phase):
        self.samples.append(TraceSample(t, r, temperature, phase))

    def __len__(self):
        return len(self.samples)

    @property
    def times(self):
        return [s.t for s in self.samples]

    @property
    def resistances(self):
        return [s.r for s in self.samples]

    @property
    def phases(self):
        return [s.phase for s in self.samples]

    def validate(self):
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.t <= prev.t:
                raise TraceFormatError(
                    f"time must be strictly increasing ({prev.t} -> {cur.t})")
        for s in self.samples:
            if s.phase != "failed" and s.r <= 0:
                raise TraceFormatError(f"non-positive resistance at t={s.t}")
        return self

    def sliced(self, start_index):
        """Copy with the first start_index samples removed (drop exclusion)."""
        out = ResistanceTrace(meta=dict(self.meta))
        out.samples = [TraceSample(s.t, s.r, s.temperature, s.phase)
                       for s in self.samples[start_index:]]
        return out


def format_trace(trace):
    """Serialize to the CSV schema, deterministically."""
    buf = io.StringIO()
    for key in sorted(trace.meta):
        buf.write(f"# {key}={trace.meta[key]}\n")
    buf.write(",".join(CSV_HEADER) + "\n")
    for s in trace.samples:
        buf.write(f"{s.t!r},{s.r!r},{s.temperature!r},{s.phase}\n")
    return buf.getvalue()


def emit_trace(trace, path):
    from .report import write_text_atomic
    write_text_atomic(path, format_trace(trace))


def parse_trace(text, column_map=None, fill_temperature=297.0):
    """Parse trace CSV text.

    column_map optionally renames foreign headers onto the canonical ones,
    e.g. ``{"time_s": "t", "resistance_ohm": "R"}`` for an external dataset.
    Missing temperature and phase columns are filled with ``fill_temperature``
    and ``idle``.
    """
    meta = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            body_start = i + 1
            item = line[1:].strip()
            if "=" in item:
                key, value = item.split("=", 1)
                meta[key.strip()] = value.strip()
        elif line.strip():
            break
        else:
            body_start = i + 1

    reader = csv.reader(lines[body_start:])
    rows = list(reader)
    if not rows:
        raise TraceFormatError("no header row found")
    header = [h.strip() for h in rows[0]]
    colmap = dict(column_map or {})
    indices = {}
    for canonical in CSV_HEADER:
        name = colmap.get(canonical, canonical)
        if name in header:
            indices[canonical] = header.index(name)
    for required in ("time_s", "resistance_ohm"):
        if required not in indices:
            raise TraceFormatError(
                f"missing required column {required!r} (header: {header})")

    trace = ResistanceTrace(meta=meta)
    for offset, row in enumerate(rows[1:]):
        line_no = body_start + 2 + offset
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            t = float(row[indices["time_s"]])
            r = float(row[indices["resistance_ohm"]])
        except (ValueError, IndexError) as exc:
            raise TraceFormatError(f"malformed row: {row}", line=line_no) from exc
        if "temperature_K" in indices:
            try:
                temperature = float(row[indices["temperature_K"]])
            except (ValueError, IndexError) as exc:
                raise TraceFormatError(f"bad temperature in row: {row}",
                                       line=line_no) from exc
        else:
            temperature = fill_temperature
        if "phase" in indices:
            try:
                phase = row[indices["phase"]].strip()
            except IndexError as exc:
                raise TraceFormatError(f"bad phase in row: {row}",
                                       line=line_no) from exc
            if phase not in PHASE_LABELS:
                raise TraceFormatError(f"unknown phase {phase!r}", line=line_no)
        else:
            phase = "idle"
        trace.append(t, r, temperature, phase)
    return trace.validate()


def ingest_trace(path, column_map=None, fill_temperature=297.0):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh.read(), column_map=column_map,
                           fill_temperature=fill_temperature)
