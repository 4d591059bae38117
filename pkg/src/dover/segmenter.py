"""Trial segmentation: partition a session into planning-execution spans.

The LLM is only ever asked for plan/replan step indices; all boundary math
is local and deterministic, and a marker-pattern fallback covers sessions
where the LLM path yields nothing usable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SegmentationFailed
from .provider import PromptRequest, Provider
from .runtime import format_steps
from .trace import PLAN_MARKER, SessionLog

DEFAULT_MARKERS = [PLAN_MARKER]


@dataclass(frozen=True)
class Trial:
    trial_index: int  # 1-based
    start_step: int
    end_step: int  # inclusive
    plan_text: str

    def to_dict(self) -> dict:
        return {
            "end_step": self.end_step,
            "plan_text": self.plan_text,
            "start_step": self.start_step,
            "trial_index": self.trial_index,
        }

    def contains(self, step_index: int) -> bool:
        return self.start_step <= step_index <= self.end_step


def sanitize_cut_points(indices: list[int], total_steps: int) -> list[int]:
    """Drop out-of-range and duplicate indices, keep ascending order, and
    insert a synthetic cut at 0 so trials always cover the whole session."""
    cuts = sorted({i for i in indices if 0 <= i < total_steps})
    if not cuts or cuts[0] != 0:
        cuts.insert(0, 0)
    return cuts


def derive_trials(cut_points: list[int], session: SessionLog) -> list[Trial]:
    """Each trial runs from its cut point to one step before the next cut;
    the last trial ends at T-1."""
    cuts = sanitize_cut_points(cut_points, session.total_steps)
    trials = []
    for i, start in enumerate(cuts):
        end = (cuts[i + 1] - 1) if i + 1 < len(cuts) else session.total_steps - 1
        trials.append(
            Trial(
                trial_index=i + 1,
                start_step=start,
                end_step=end,
                plan_text=session.steps[start].message.content,
            )
        )
    return trials


def segment_by_pattern(
    session: SessionLog, markers: list[str] | None = None
) -> list[Trial]:
    """Cut exactly at steps whose message content starts with any marker."""
    if session.total_steps == 0:
        raise SegmentationFailed("cannot segment an empty session")
    markers = markers or DEFAULT_MARKERS
    cuts = [
        s.index
        for s in session.steps
        if any(s.message.content.startswith(m) for m in markers)
    ]
    return derive_trials(cuts, session)


def segment(session: SessionLog, provider: Provider) -> list[Trial]:
    """LLM-proposed cut points with deterministic derivation and fallback."""
    if session.total_steps == 0:
        raise SegmentationFailed("cannot segment an empty session")
    completion = provider.complete(
        PromptRequest(
            template_id="trial_segmenter",
            variables={
                "task": session.task.description,
                "steps": format_steps(session.steps),
            },
            expect_schema="segment_indices",
        )
    )
    if completion.malformed or completion.parsed is None:
        return segment_by_pattern(session)
    raw_indices = []
    for value in completion.parsed.get("plan_step_indices", []):
        if isinstance(value, int) and not isinstance(value, bool):
            raw_indices.append(value)
        elif isinstance(value, str) and value.strip().lstrip("-").isdigit():
            raw_indices.append(int(value.strip()))
    in_range = [i for i in raw_indices if 0 <= i < session.total_steps]
    if not in_range:
        return segment_by_pattern(session)
    return derive_trials(in_range, session)
