"""Corpus studies over thread labelings: thread length by era and floor claiming by gender.

Inputs are per-title thread partitions (gold or predicted) joined with a
metadata CSV giving release year and per-character gender. Every report
carries the provenance of the partitions it was computed from.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .annotation import ThreadPartition
from .errors import BadGenderCode, DuplicateCharacter, EmptyYear, MetadataError, MissingYear
from .screenplay import Utterance, normalize_speaker

GENDERS = ("woman", "man", "unknown")
_GENDER_CODES = {"1": "woman", "2": "man", "0": "unknown", "woman": "woman", "man": "man", "unknown": "unknown"}


@dataclass
class TitleMetadata:
    title_slug: str
    release_year: int
    character_gender: dict[str, str] = field(default_factory=dict)

    def gender(self, speaker: str) -> str:
        return self.character_gender.get(normalize_speaker(speaker)[0], "unknown")


def ingest_metadata(stream: str | Iterable[str]) -> dict[str, TitleMetadata]:
    """Read ``title_slug,year,character,gender`` rows.

    Gender is ``woman``/``man``/``unknown`` or the numeric codes 1/2/0.
    A row with an empty character only sets the title's year.
    """
    text = stream if isinstance(stream, str) else "".join(stream)
    reader = csv.DictReader(io.StringIO(text))
    need = {"title_slug", "year", "character", "gender"}
    if not need <= set(reader.fieldnames or []):
        raise MetadataError(f"metadata needs columns {sorted(need)}")
    out: dict[str, TitleMetadata] = {}
    for line_no, row in enumerate(reader, start=2):
        slug = row["title_slug"].strip()
        try:
            year = int(row["year"])
        except (TypeError, ValueError):
            raise MissingYear(f"line {line_no}: no usable year for {slug!r}") from None
        if not 1900 <= year <= 2100:
            raise MetadataError(f"line {line_no}: year {year} out of range")
        meta = out.setdefault(slug, TitleMetadata(slug, year))
        if meta.release_year != year:
            raise MetadataError(f"line {line_no}: {slug} has conflicting years {meta.release_year} and {year}")
        character = (row["character"] or "").strip()
        if not character:
            continue
        code = (row["gender"] or "").strip().lower()
        if code not in _GENDER_CODES:
            raise BadGenderCode(f"line {line_no}: gender {row['gender']!r}")
        name = normalize_speaker(character)[0]
        if name in meta.character_gender:
            raise DuplicateCharacter(f"line {line_no}: {slug}/{name} listed twice")
        meta.character_gender[name] = _GENDER_CODES[code]
    return out


def _as_list(partitions) -> list[ThreadPartition]:
    return [partitions] if isinstance(partitions, ThreadPartition) else list(partitions)


def _percentile_ci(stats: np.ndarray) -> tuple[float, float]:
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# thread length by era


@dataclass
class EraBucket:
    start_year: int
    mean_thread_length: float
    ci: tuple[float, float]
    n_movies: int


def title_mean_thread_length(partitions) -> float:
    parts = _as_list(partitions)
    n_utts = sum(len(p.assignment) for p in parts)
    n_threads = sum(len(set(p.assignment.values())) for p in parts)
    if not n_threads:
        raise ValueError("title has no threads")
    return n_utts / n_threads


def thread_length_by_era(corpus: Mapping[str, ThreadPartition | Sequence[ThreadPartition]], meta: Mapping[str, TitleMetadata],
                         bucket_width: int = 5, resamples: int = 1000, seed: int = 0) -> list[EraBucket]:
    """Mean of per-title mean thread lengths in each ``bucket_width``-year bucket."""
    means: dict[int, list[tuple[str, float]]] = {}
    for title, parts in corpus.items():
        if title not in meta:
            raise MissingYear(f"no metadata for {title}")
        start = meta[title].release_year // bucket_width * bucket_width
        means.setdefault(start, []).append((title, title_mean_thread_length(parts)))
    out = []
    for start in sorted(means):
        vals = np.array([m for _, m in sorted(means[start])])
        point = float(vals.mean())
        if len(vals) > 1:
            rng = np.random.default_rng([seed, start])
            idx = rng.integers(0, len(vals), size=(resamples, len(vals)))
            ci = _percentile_ci(vals[idx].mean(axis=1))
        else:
            ci = (point, point)
        out.append(EraBucket(start, point, ci, len(vals)))
    return out


# --------------------------------------------------------------------------
# floor claiming


@dataclass
class FloorClaimRecord:
    year: int | None  # None for the pooled all-years record
    pct_threads_started_by_women: float
    pct_lines_by_women: float
    delta: float
    ci: tuple[float, float]
    n_titles: int


@dataclass
class TitleCounts:
    threads_women: int = 0
    threads_men: int = 0
    threads_unknown: int = 0
    lines_women: int = 0
    lines_men: int = 0
    lines_unknown: int = 0


def title_counts(partitions, utterances: Sequence[Utterance], meta: TitleMetadata) -> TitleCounts:
    """Thread initiators and dialogue lines per gender for one title."""
    by_id = {(u.scene_id, u.utt_id): u for u in utterances}
    c = TitleCounts()
    for part in _as_list(partitions):
        first: dict[str, Utterance] = {}
        for utt_id, label in part.assignment.items():
            u = by_id[(part.scene_id, utt_id)]
            if label not in first or u.position < first[label].position:
                first[label] = u
        for u in first.values():
            g = meta.gender(u.speaker)
            setattr(c, f"threads_{_plural(g)}", getattr(c, f"threads_{_plural(g)}") + 1)
    seen = {}
    for u in utterances:
        seen.setdefault((u.scene_id, u.line_id), u.speaker)
    for speaker in seen.values():
        g = meta.gender(speaker)
        setattr(c, f"lines_{_plural(g)}", getattr(c, f"lines_{_plural(g)}") + 1)
    return c


def _plural(g):
    return {"woman": "women", "man": "men"}.get(g, "unknown")


def _shares(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """counts columns: threads_w, threads_m, lines_w, lines_m (rows may be summed)."""
    started = 100.0 * counts[..., 0] / (counts[..., 0] + counts[..., 1])
    lines = 100.0 * counts[..., 2] / (counts[..., 2] + counts[..., 3])
    return started, lines


def _record(year, rows: np.ndarray, resamples: int, rng) -> FloorClaimRecord | None:
    total = rows.sum(axis=0)
    if total[0] + total[1] == 0 or total[2] + total[3] == 0:
        return None
    started, lines = _shares(total)
    delta = started - lines
    if len(rows) > 1:
        idx = rng.integers(0, len(rows), size=(resamples, len(rows)))
        sums = rows[idx].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s, l = _shares(sums)
        d = s - l
        ci = _percentile_ci(d[np.isfinite(d)])
    else:
        ci = (float(delta), float(delta))
    return FloorClaimRecord(year, float(started), float(lines), float(delta), ci, len(rows))


@dataclass
class FloorClaimReport:
    records: list[FloorClaimRecord]
    pooled: FloorClaimRecord | None
    skipped_years: list[int] = field(default_factory=list)

    def pooled_fraction_scale(self) -> dict | None:
        """The pooled delta and CI expressed as fractions rather than percentage points."""
        if self.pooled is None:
            return None
        p = self.pooled
        return {"delta": p.delta / 100.0, "ci": (p.ci[0] / 100.0, p.ci[1] / 100.0)}


def floor_claiming(corpus: Mapping[str, tuple], meta: Mapping[str, TitleMetadata], min_year: int = 1980,
                   resamples: int = 1000, seed: int = 0) -> FloorClaimReport:
    """Share of threads started by women minus share of lines spoken by women, per year.

    ``corpus`` maps title -> (partitions, utterances). Characters of unknown
    gender are left out of both numerators and denominators.
    """
    per_year: dict[int, list[tuple[str, list[int]]]] = {}
    for title, (parts, utts) in corpus.items():
        if title not in meta:
            raise MissingYear(f"no metadata for {title}")
        m = meta[title]
        if m.release_year < min_year:
            continue
        c = title_counts(parts, utts, m)
        per_year.setdefault(m.release_year, []).append((title, [c.threads_women, c.threads_men, c.lines_women, c.lines_men]))
    records, skipped = [], []
    for year in sorted(per_year):
        rows = np.array([r for _, r in sorted(per_year[year])], dtype=np.float64)
        rec = _record(year, rows, resamples, np.random.default_rng([seed, year]))
        if rec is None:
            warnings.warn(f"year {year}: no threads or lines by characters of known gender; skipped", EmptyYear)
            skipped.append(year)
            continue
        records.append(rec)
    all_rows = [r for y in sorted(per_year) if y not in skipped for _, r in sorted(per_year[y])]
    pooled = _record(None, np.array(all_rows, dtype=np.float64), resamples, np.random.default_rng([seed, 0])) if all_rows else None
    return FloorClaimReport(records, pooled, skipped)


# --------------------------------------------------------------------------
# output


@dataclass
class AnalysisReport:
    provenance: str
    era_buckets: list[EraBucket]
    floor: FloorClaimReport | None

    def to_json(self) -> str:
        d = {
            "provenance": self.provenance,
            "thread_length_by_era": [asdict(b) for b in self.era_buckets],
        }
        if self.floor is not None:
            d["floor_claiming"] = {
                "records": [asdict(r) for r in self.floor.records],
                "pooled": asdict(self.floor.pooled) if self.floor.pooled else None,
                "pooled_fraction_scale": self.floor.pooled_fraction_scale(),
                "skipped_years": self.floor.skipped_years,
            }
        return json.dumps(d, indent=2) + "\n"


_ERA_HEADER = ["x", "point", "lo", "hi", "n"]
_FLOOR_HEADER = _ERA_HEADER + ["pct_threads_started_by_women", "pct_lines_by_women"]


def emit_plot_data(items: Sequence[EraBucket] | Sequence[FloorClaimRecord]) -> str:
    """Plot-ready CSV, one row per bucket or year (pooled records are left out)."""
    if not items:
        raise ValueError("nothing to plot")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(items[0], EraBucket):
        w.writerow(_ERA_HEADER)
        for b in items:
            w.writerow([b.start_year, b.mean_thread_length, b.ci[0], b.ci[1], b.n_movies])
    else:
        w.writerow(_FLOOR_HEADER)
        for r in items:
            if r.year is None:
                continue
            w.writerow([r.year, r.delta, r.ci[0], r.ci[1], r.n_titles, r.pct_threads_started_by_women, r.pct_lines_by_women])
    return buf.getvalue()


def read_plot_data(text: str) -> list[EraBucket] | list[FloorClaimRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header == _ERA_HEADER:
        return [EraBucket(int(x), float(p), (float(lo), float(hi)), int(n)) for x, p, lo, hi, n in body]
    if header == _FLOOR_HEADER:
        return [FloorClaimRecord(int(x), float(s), float(l), float(p), (float(lo), float(hi)), int(n))
                for x, p, lo, hi, n, s, l in body]
    raise ValueError(f"unrecognized plot data header {header}")
