"""Frontend pipeline: guard, translate, recover, preprocess, then the classic
TTS text stages (TN, CWS, POS, prosody, G2P) as deterministic pass-through
stubs that a real implementation can replace.

Stages declare which earlier stages they depend on, so an order that, say,
recovers guarded spans before translating is rejected when the pipeline is
assembled rather than at run time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .errors import ConfigError, EmptyInputError, PipelineError
from .guard import GuardedText, guard as guard_text, unguard
from .model import (
    ModelParams,
    collapse_repeats,
    decode_parallel,
    encode,
    init_decoder_inputs,
    predict_length,
)
from .textproc import SegmentedSentence, Vocab, detokenize, preprocess, segment_greedy


@dataclass
class PipelineContext:
    """Shared immutable resources for the stages."""

    params: ModelParams | None = None
    vocab: Vocab | None = None
    lexicon: frozenset = frozenset()
    patterns: tuple | None = None
    identity_translation: bool = False


@dataclass
class FrontendDoc:
    original: str
    text: str = ""                      # working text as stages run
    guarded: GuardedText | None = None
    translated: str | None = None
    normalized: str | None = None
    segmentation: SegmentedSentence | None = None
    pos_tags: list[tuple[str, str]] = field(default_factory=list)
    prosody_breaks: list[int] = field(default_factory=list)
    phonemes: list[str] = field(default_factory=list)
    trace: list[tuple[str, str, str]] = field(default_factory=list)


@dataclass(frozen=True)
class PipelineStage:
    name: str
    transform: object                   # (FrontendDoc, PipelineContext) -> None
    requires: tuple[str, ...] = ()


def _guard_stage(doc: FrontendDoc, ctx: PipelineContext):
    doc.guarded = guard_text(doc.text, ctx.patterns)
    doc.text = doc.guarded.guarded


def _translate_stage(doc: FrontendDoc, ctx: PipelineContext):
    if ctx.identity_translation or ctx.params is None:
        doc.translated = doc.text
    else:
        sent = segment_greedy(doc.text, ctx.lexicon, ctx.vocab)
        if not sent.ids:
            doc.translated = ""
        else:
            with ad.no_grad():
                enc = encode(sent, ctx.params)
                tgt_len = predict_length(enc, ctx.params)
                out = decode_parallel(
                    init_decoder_inputs(enc, tgt_len, ctx.params.config),
                    enc, ctx.params)
            ids = out.predicted_ids
            if ctx.params.config.collapse_repeats:
                ids = collapse_repeats(ids)
            doc.translated = detokenize(ids, ctx.vocab)
    doc.text = doc.translated


def _unguard_stage(doc: FrontendDoc, ctx: PipelineContext):
    doc.text = unguard(doc.text, doc.guarded)


def _clean_piece(raw: str, pad_left: bool, pad_right: bool) -> str:
    """Normalize one inter-span segment, keeping a single boundary space
    toward an adjacent guarded span when the raw text had one."""
    cleaned = preprocess(raw)
    if not cleaned:
        return " " if raw and not raw.strip() and (pad_left or pad_right) else ""
    left = " " if pad_left and raw != raw.lstrip() else ""
    right = " " if pad_right and raw != raw.rstrip() else ""
    return left + cleaned + right


def _preprocess_stage(doc: FrontendDoc, ctx: PipelineContext):
    """Clean the text while leaving recovered guarded spans byte-exact."""
    originals = doc.guarded.originals if doc.guarded else []
    text = doc.text
    pieces: list[str] = []
    for n, original in enumerate(originals):
        before, hit, text = text.partition(original)
        pieces.append(_clean_piece(before, pad_left=n > 0, pad_right=bool(hit)))
        pieces.append(hit and original)
    pieces.append(_clean_piece(text, pad_left=bool(originals), pad_right=False))
    doc.normalized = "".join(pieces)
    doc.text = doc.normalized


def _tn_stub(doc: FrontendDoc, ctx: PipelineContext):
    doc.normalized = doc.text  # identity normalization


def _cws_stage(doc: FrontendDoc, ctx: PipelineContext):
    doc.segmentation = segment_greedy(doc.text, ctx.lexicon, ctx.vocab)


def _pos_stub(doc: FrontendDoc, ctx: PipelineContext):
    words = doc.segmentation.words if doc.segmentation else [doc.text]
    doc.pos_tags = [(w, "X") for w in words]


def _prosody_stub(doc: FrontendDoc, ctx: PipelineContext):
    doc.prosody_breaks = []


def _g2p_stub(doc: FrontendDoc, ctx: PipelineContext):
    doc.phonemes = [f"PH({c})" for c in doc.text]


STAGES = {
    "guard": PipelineStage("guard", _guard_stage),
    "translate": PipelineStage("translate", _translate_stage, requires=("guard",)),
    "unguard": PipelineStage("unguard", _unguard_stage, requires=("guard", "translate")),
    "preprocess": PipelineStage("preprocess", _preprocess_stage),
    "tn": PipelineStage("tn", _tn_stub),
    "cws": PipelineStage("cws", _cws_stage),
    "pos": PipelineStage("pos", _pos_stub, requires=("cws",)),
    "prosody": PipelineStage("prosody", _prosody_stub),
    "g2p": PipelineStage("g2p", _g2p_stub),
}

DEFAULT_ORDER = ("guard", "translate", "unguard", "preprocess", "tn", "cws",
                 "pos", "prosody", "g2p")


def default_stubs() -> dict[str, PipelineStage]:
    """The deterministic pass-through implementations of TN/POS/prosody/G2P."""
    return {name: STAGES[name] for name in ("tn", "pos", "prosody", "g2p")}


def build_pipeline(stage_names=DEFAULT_ORDER) -> list[PipelineStage]:
    """Resolve names to stages and check dependency order up front."""
    if not stage_names:
        raise EmptyInputError("pipeline needs at least one stage")
    stages = []
    seen: set[str] = set()
    for name in stage_names:
        if name not in STAGES:
            raise ConfigError(f"unknown pipeline stage {name!r}")
        stage = STAGES[name]
        missing = [r for r in stage.requires if r not in seen]
        if missing:
            raise ConfigError(
                f"stage {name!r} requires {missing} to run earlier")
        stages.append(stage)
        seen.add(name)
    return stages


def run_pipeline(text: str, stages=None, context: PipelineContext | None = None) -> FrontendDoc:
    """Run the stages in order; a failing stage aborts with the trace so far."""
    if stages is None or isinstance(stages, (tuple, list)) and stages and isinstance(stages[0], str):
        stages = build_pipeline(stages or DEFAULT_ORDER)
    context = context or PipelineContext(identity_translation=True)
    doc = FrontendDoc(original=text, text=text)
    for stage in stages:
        before = doc.text
        try:
            stage.transform(doc, context)
        except Exception as exc:
            raise PipelineError(stage.name, doc.trace, exc) from exc
        doc.trace.append((stage.name, before, doc.text))
    return doc
