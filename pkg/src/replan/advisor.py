"""Pluggable advisor answering the three guidance roles.

An advisor formulates planning objectives from demographics and style,
recommends up to three functional types for the plot under decision, and
scores stakeholder satisfaction for a completed scheme. The deterministic
mock keeps the whole pipeline trainable offline; the remote client talks
to any chat-completion endpoint with retries and an on-disk response cache.
"""

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .domain import (
    FacilitySubtype,
    FuncType,
    HOSPITAL_SUBTYPES,
    PlotStatus,
    Region,
    RegionStats,
    SCHOOL_SUBTYPES,
    SizeClass,
    living_circle_stats,
    region_stats,
    size_class,
)
from .rewards import (
    AspectRating,
    COVERAGE_LEVELS,
    Demands,
    SatLevel,
    SchemeSummary,
    StakeholderScore,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "REPLAN_API_KEY"

# Types the recommendation stage may propose (everything but residential).
RECOMMENDABLE = tuple(t for t in FuncType if t is not FuncType.RESIDENTIAL)

COVERAGE_DEMAND_TYPES = (
    FuncType.BUSINESS,
    FuncType.OFFICE,
    FuncType.RECREATION,
    FuncType.PARK,
    FuncType.OPEN_SPACE,
)


class AdvisorError(Exception):
    pass


class AdvisorTransportError(AdvisorError):
    """Network-level failure after all retries."""


class AdvisorSchemaError(AdvisorError):
    """Response did not validate; carries the raw text for diagnosis."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class StakeholderProfile(Enum):
    RESIDENT = "resident"
    GOVERNMENT = "government"
    DEVELOPER = "developer"

    @property
    def template(self) -> str:
        return f"satisfaction_{self.value}.txt"


@dataclass(frozen=True)
class RecSet:
    """Recommended functional types for one plot; empty means abstain."""

    types: Tuple[FuncType, ...] = ()

    def __post_init__(self):
        if len(self.types) > 3:
            raise ValueError("at most 3 recommended types")
        if len(set(self.types)) != len(self.types):
            raise ValueError("duplicate recommended types")
        if FuncType.RESIDENTIAL in self.types:
            raise ValueError("residential is never recommended")

    @property
    def is_abstain(self) -> bool:
        return len(self.types) == 0


ABSTAIN = RecSet()


@dataclass
class PlotContext:
    """What the recommendation stage sees about the plot under decision."""

    size: SizeClass
    in_circle_types: Tuple[FuncType, ...]
    area: float = 0.0


@dataclass
class RegionSummary:
    total_area: float
    type_areas: Dict[FuncType, float]
    type_counts: Dict[FuncType, int]
    n_plots: int
    n_vacant: int

    @classmethod
    def from_region(cls, region: Region) -> "RegionSummary":
        stats = region_stats(region)
        return cls(
            total_area=region.total_area,
            type_areas={f: float(stats.ratios[f] * region.total_area) for f in FuncType},
            type_counts={f: int(stats.counts[f]) for f in FuncType},
            n_plots=len(region.plots),
            n_vacant=len(region.remaining_vacant()),
        )


def build_plot_context(region: Region, plot_idx: int) -> PlotContext:
    plot = region.plots[plot_idx]
    lc = living_circle_stats(region, plot_idx)
    present = tuple(f for f in FuncType if lc.counts[f] > 0)
    return PlotContext(
        size=size_class(plot, region.config.large_plot_threshold),
        in_circle_types=present,
        area=plot.area,
    )


@dataclass
class AdvisorRequest:
    kind: str  # objectives | recommend | score
    prompt: str
    context_digest: str = ""


@dataclass
class AdvisorResponse:
    payload: object
    raw: str
    latency: float = 0.0
    cached: bool = False


class Advisor:
    """Interface shared by the mock and remote implementations."""

    def formulate_objectives(
        self, demographics: str, style: str, summary: RegionSummary
    ) -> Demands:
        raise NotImplementedError

    def recommend_types(
        self,
        context: PlotContext,
        stats: RegionStats,
        demands: Demands,
        facility_tally: Dict[FacilitySubtype, int],
    ) -> RecSet:
        raise NotImplementedError

    def score_satisfaction(self, summary: SchemeSummary) -> List[StakeholderScore]:
        raise NotImplementedError


def _threshold_level(value: float) -> SatLevel:
    if value < 0.25:
        return SatLevel.POOR
    if value < 0.5:
        return SatLevel.AVERAGE
    if value < 0.75:
        return SatLevel.GOOD
    return SatLevel.VERY_GOOD


class MockAdvisor(Advisor):
    """Deterministic rule-based advisor; no network, reproducible per seed.

    Objectives come from a style-keyword table, recommendations from a
    normalized-deficit ranking (facility quotas outrank coverage gaps) and
    satisfaction from per-profile metric thresholds.
    """

    FACILITY_DENSITY = 2e6  # m^2 of region per facility of each subtype

    def __init__(self, seed: int = 0):
        self.seed = seed

    def formulate_objectives(
        self, demographics: str, style: str, summary: RegionSummary
    ) -> Demands:
        if not style.strip():
            raise AdvisorError("planning style text must be non-empty")
        text = style.lower()
        levels = {f: "medium" for f in COVERAGE_DEMAND_TYPES}
        if "green" in text:
            levels[FuncType.PARK] = "high"
        if "low commercial" in text or "quiet" in text:
            levels[FuncType.BUSINESS] = "low"
        elif "commercial" in text or "tourist" in text:
            levels[FuncType.BUSINESS] = "high"
        per_subtype = max(1, round(summary.total_area / self.FACILITY_DENSITY))
        return Demands(
            coverage={f: COVERAGE_LEVELS[lvl] for f, lvl in levels.items()},
            counts={s: per_subtype for s in FacilitySubtype},
        )

    def recommend_types(self, context, stats, demands, facility_tally) -> RecSet:
        feasible_subs = {
            FuncType.SCHOOL: SCHOOL_SUBTYPES[:1] if context.size is SizeClass.SMALL else SCHOOL_SUBTYPES[1:],
            FuncType.HOSPITAL: HOSPITAL_SUBTYPES[:1] if context.size is SizeClass.SMALL else HOSPITAL_SUBTYPES[1:],
        }
        ranked = []
        for func, subs in feasible_subs.items():
            deficit = sum(
                max(0, demands.counts.get(s, 0) - facility_tally.get(s, 0)) for s in subs
            )
            if deficit > 0:
                ranked.append((0, -deficit, int(func), func))
        for func in COVERAGE_DEMAND_TYPES:
            dem = demands.coverage.get(func, 0.0)
            if dem <= 0:
                continue
            gap = (dem - float(stats.ratios[func])) / dem
            if gap > 0:
                ranked.append((1, -gap, int(func), func))
        ranked.sort()
        return RecSet(types=tuple(func for *_, func in ranked[:3]))

    def score_satisfaction(self, summary: SchemeSummary) -> List[StakeholderScore]:
        m = summary.metrics
        sustainability = (m["ecology"] + m["equity"]) / 2.0
        return [
            StakeholderScore(
                profile=StakeholderProfile.RESIDENT.value,
                ratings=[
                    AspectRating(
                        aspect="services",
                        level=_threshold_level(m["service"]),
                        reason=f"residential service coverage at {m['service']:.2f}",
                    )
                ],
            ),
            StakeholderScore(
                profile=StakeholderProfile.GOVERNMENT.value,
                ratings=[
                    AspectRating(
                        aspect="sustainability",
                        level=_threshold_level(sustainability),
                        reason=f"ecology and equity average at {sustainability:.2f}",
                    )
                ],
            ),
            StakeholderScore(
                profile=StakeholderProfile.DEVELOPER.value,
                ratings=[
                    AspectRating(
                        aspect="economy",
                        level=_threshold_level(m["economy"]),
                        reason=f"economic coverage attainment at {m['economy']:.2f}",
                    )
                ],
            ),
        ]


class AlwaysAbstainAdvisor(MockAdvisor):
    """Never recommends; trains as plain PPO. Useful for ablations and tests."""

    def recommend_types(self, context, stats, demands, facility_tally) -> RecSet:
        return ABSTAIN


# -- remote client ---------------------------------------------------------


@dataclass
class RemoteConfig:
    endpoint: str
    model: str = "gpt-3.5-turbo"
    prompt_dir: Optional[str] = None
    cache_path: str = "advisor_cache.jsonl"
    timeout: float = 30.0
    max_attempts: int = 3
    max_in_flight: int = 4
    api_key_env: str = API_KEY_ENV


def _default_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return resp.status_code, resp.text


class ResponseCache:
    """JSONL-backed prompt-digest cache, append-only, thread-safe."""

    def __init__(self, path: str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: Dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._entries[rec["digest"]] = rec["response"]

    def get(self, digest: str) -> Optional[str]:
        with self._lock:
            return self._entries.get(digest)

    def put(self, digest: str, kind: str, response: str):
        with self._lock:
            self._entries[digest] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                rec = {
                    "digest": digest,
                    "kind": kind,
                    "response": response,
                    "timestamp": time.time(),
                }
                fh.write(json.dumps(rec) + "\n")


def load_prompt(name: str, prompt_dir: Optional[str] = None) -> str:
    if prompt_dir:
        return (Path(prompt_dir) / name).read_text(encoding="utf-8")
    return (Path(__file__).parent / "prompts" / name).read_text(encoding="utf-8")


def remote_chat(
    request: AdvisorRequest,
    cfg: RemoteConfig,
    transport: Callable = _default_transport,
    cache: Optional[ResponseCache] = None,
    bypass_cache: bool = False,
) -> AdvisorResponse:
    """One chat-completion call: cached, retried with exponential backoff."""
    digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()
    if cache is not None and not bypass_cache:
        hit = cache.get(digest)
        if hit is not None:
            return AdvisorResponse(payload=None, raw=hit, cached=True)

    key = os.environ.get(cfg.api_key_env, "")
    if not key:
        raise AdvisorTransportError(f"missing credential: set {cfg.api_key_env}")
    url = cfg.endpoint.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": 0,
    }

    start = time.time()
    last_err = "no attempt made"
    for attempt in range(cfg.max_attempts):
        if attempt > 0:
            time.sleep(min(2.0 ** (attempt - 1), 8.0))
        try:
            status, text = transport(url, headers, payload, cfg.timeout)
        except Exception as exc:  # connection/timeout level
            last_err = f"transport failure: {exc}"
            continue
        if status == 200:
            try:
                body = json.loads(text)
                content = body["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise AdvisorSchemaError(f"malformed completion body: {exc}", raw=text)
            if cache is not None:
                cache.put(digest, request.kind, content)
            return AdvisorResponse(payload=None, raw=content, latency=time.time() - start)
        last_err = f"HTTP {status}"
        if status not in (429, 500, 502, 503, 504):
            break
    raise AdvisorTransportError(f"{request.kind} call failed after {cfg.max_attempts} attempts: {last_err}")


def parse_objectives(raw: str) -> Demands:
    """Validate the objectives JSON reply and map coverage words to fractions."""
    match = re.search(r"\{.*\}", raw, re.DOTALL)
    if not match:
        raise AdvisorSchemaError("no JSON object in objectives reply", raw=raw)
    try:
        doc = json.loads(match.group(0))
    except json.JSONDecodeError as exc:
        raise AdvisorSchemaError(f"objectives reply is not valid JSON: {exc}", raw=raw)

    count_keys = {
        "Hospital": FacilitySubtype.LARGE_HOSPITAL,
        "Clinic": FacilitySubtype.CLINIC,
        "Secondary": FacilitySubtype.SECONDARY_SCHOOL,
        "Primary": FacilitySubtype.PRIMARY_SCHOOL,
        "Kindergarten": FacilitySubtype.KINDERGARTEN,
    }
    coverage_keys = {
        "Business": FuncType.BUSINESS,
        "Recreation": FuncType.RECREATION,
        "Office": FuncType.OFFICE,
        "Park": FuncType.PARK,
        "Open space": FuncType.OPEN_SPACE,
    }
    counts = {}
    for key, sub in count_keys.items():
        if key not in doc:
            raise AdvisorSchemaError(f"objectives reply missing key {key!r}", raw=raw)
        counts[sub] = int(doc[key])
    coverage = {}
    for key, func in coverage_keys.items():
        if key not in doc:
            raise AdvisorSchemaError(f"objectives reply missing key {key!r}", raw=raw)
        word = str(doc[key]).lower()
        for level, frac in COVERAGE_LEVELS.items():
            if level in word:
                coverage[func] = frac
                break
        else:
            raise AdvisorSchemaError(f"unrecognized coverage level {doc[key]!r}", raw=raw)
    return Demands(coverage=coverage, counts=counts)


def parse_recommendation(raw: str) -> RecSet:
    """Parse '[Office, Park, School]' style replies; 'No' means abstain."""
    text = raw.strip()
    if re.search(r"\bno\b", text.lower()) and "[" not in text:
        return ABSTAIN
    match = re.search(r"\[(.*?)\]", text, re.DOTALL)
    if not match:
        raise AdvisorSchemaError("no recommendation list in reply", raw=raw)
    names = [n.strip().strip("\"'") for n in match.group(1).split(",") if n.strip()]
    alias = {
        "residential": FuncType.RESIDENTIAL,
        "business": FuncType.BUSINESS,
        "office": FuncType.OFFICE,
        "recreation": FuncType.RECREATION,
        "school": FuncType.SCHOOL,
        "hospital": FuncType.HOSPITAL,
        "park": FuncType.PARK,
        "open space": FuncType.OPEN_SPACE,
        "open_space": FuncType.OPEN_SPACE,
        "openspace": FuncType.OPEN_SPACE,
    }
    types: List[FuncType] = []
    for name in names:
        func = alias.get(name.lower())
        if func is None or func is FuncType.RESIDENTIAL:
            log.warning("dropping invalid recommended type %r", name)
            continue
        if func not in types:
            types.append(func)
    return RecSet(types=tuple(types[:3]))


def parse_satisfaction(raw: str) -> List[AspectRating]:
    """Extract per-aspect discrete levels from a rating reply."""
    ratings: List[AspectRating] = []
    for line in raw.splitlines():
        if ":" not in line:
            continue
        aspect, rest = line.split(":", 1)
        aspect = aspect.strip(" -*#").lower()
        if not aspect or len(aspect.split()) > 4:
            continue
        try:
            level = SatLevel.from_text(rest)
        except ValueError:
            continue
        reason = rest.split("-", 1)[1].strip() if "-" in rest else rest.strip()
        ratings.append(AspectRating(aspect=aspect, level=level, reason=reason))
    if ratings:
        return ratings
    try:
        return [AspectRating(aspect="overall", level=SatLevel.from_text(raw), reason=raw.strip())]
    except ValueError:
        raise AdvisorSchemaError("no satisfaction level in reply", raw=raw)


class RemoteAdvisor(Advisor):
    """Chat-completion-backed advisor with caching and schema validation.

    Every reply is validated before it crosses the module boundary; a reply
    that fails validation is re-requested once with the cache bypassed.
    """

    def __init__(
        self,
        cfg: RemoteConfig,
        transport: Callable = _default_transport,
    ):
        self.cfg = cfg
        self.transport = transport
        self.cache = ResponseCache(cfg.cache_path)
        self._gate = threading.Semaphore(cfg.max_in_flight)

    def _chat(self, kind: str, prompt: str, bypass_cache: bool = False) -> AdvisorResponse:
        request = AdvisorRequest(kind=kind, prompt=prompt)
        with self._gate:
            return remote_chat(
                request, self.cfg, transport=self.transport, cache=self.cache,
                bypass_cache=bypass_cache,
            )

    def _chat_parsed(self, kind: str, prompt: str, parser: Callable):
        response = self._chat(kind, prompt)
        try:
            return parser(response.raw)
        except AdvisorSchemaError:
            response = self._chat(kind, prompt, bypass_cache=True)
            return parser(response.raw)

    def formulate_objectives(self, demographics, style, summary) -> Demands:
        region_text = (
            f"Now consider a community of {summary.total_area / 1e6:.2f} square kilometers "
            f"with {summary.n_plots} plots, {summary.n_vacant} of them awaiting planning. "
            "Current built share per type: "
            + ", ".join(
                f"{f.label} {summary.type_areas[f] / summary.total_area:.3f}" for f in FuncType
            )
        )
        prompt = load_prompt("objectives.txt", self.cfg.prompt_dir).format(
            region_summary=region_text, demographics=demographics, style=style
        )
        return self._chat_parsed("objectives", prompt, parse_objectives)

    def recommend_types(self, context, stats, demands, facility_tally) -> RecSet:
        goals = _render_goals(demands)
        surrounding = [f.label for f in context.in_circle_types]
        coverage = ", ".join(
            f"{f.label} area is {float(stats.ratios[f]):.4f}" for f in COVERAGE_DEMAND_TYPES
        )
        facilities = ", ".join(
            f"{s.label}(s): {facility_tally.get(s, 0)}" for s in FacilitySubtype
        )
        prompt = load_prompt("recommend.txt", self.cfg.prompt_dir).format(
            planning_goals=goals,
            size_class=context.size.value,
            surrounding_types=surrounding,
            coverage_summary=coverage,
            facility_summary=facilities,
        )
        try:
            return self._chat_parsed("recommend", prompt, parse_recommendation)
        except AdvisorTransportError as exc:
            log.warning("recommendation call failed (%s); abstaining", exc)
            return ABSTAIN

    def score_satisfaction(self, summary: SchemeSummary) -> List[StakeholderScore]:
        targets = _render_goals(summary.demands)
        details = (
            "Coverage ratio per functional type: "
            + ", ".join(f"{f.label} {summary.coverage[f]:.4f}" for f in FuncType)
            + ". Facilities built: "
            + ", ".join(f"{s.label}: {summary.facility_tally.get(s, 0)}" for s in FacilitySubtype)
        )
        scores = []
        for profile in StakeholderProfile:
            prompt = load_prompt(profile.template, self.cfg.prompt_dir).format(
                planning_targets=targets, detailed_information=details
            )
            ratings = self._chat_parsed("score", prompt, parse_satisfaction)
            scores.append(StakeholderScore(profile=profile.value, ratings=ratings))
        return scores


def _render_goals(demands: Demands) -> str:
    cov = ", ".join(
        f"{f.label} to {demands.coverage[f]:.2f}"
        for f in COVERAGE_DEMAND_TYPES
        if f in demands.coverage
    )
    quotas = ", ".join(
        f"{s.label}: {demands.counts[s]}" for s in FacilitySubtype if s in demands.counts
    )
    return f"Make the coverage area of {cov}. Build facilities: {quotas}."
