"""Session persistence: JSON documents with atomic file storage.

One self-contained document per session. All numeric wire fields carry unit
suffixes so the mixed units of the problem (m/s, mm/min, degC, nm, U) cannot
be silently confused. Serialization is lossless for floats (shortest
round-trip repr) and byte-deterministic (sorted keys); unknown top-level
fields survive a load/save cycle so newer documents can pass through older
code. Saves are write-temp-then-rename, so concurrent readers only ever see
a complete document.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

from .cost import CostParams
from .gp import Hyperparams
from .session import ConvergenceStatus, Recommendation, Session, SessionConfig
from .types import ConstraintSpec, Domain, Proposal, ProcessParams, TrialOutcome, TrialRecord

SCHEMA_VERSION = 1

_KNOWN_FIELDS = {
    "schema_version",
    "session_id",
    "created_at_utc",
    "updated_at_utc",
    "config",
    "trials",
    "pending_proposals",
    "proposal_history",
    "recommendations",
    "convergence_history",
    "model_hyperparameters",
    "degraded",
    "trial_tokens",
    "trial_responses",
}


class SessionNotFoundError(KeyError):
    pass


class DocumentParseError(ValueError):
    """Corrupt session document; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


def utc_now_iso() -> str:
    """Current UTC time; honors SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        stamp = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        stamp = datetime.now(tz=timezone.utc)
    return stamp.isoformat()


@dataclass
class SessionDocument:
    """A session plus its storage envelope."""

    session: Session
    session_id: str
    created_at_utc: str = field(default_factory=utc_now_iso)
    updated_at_utc: str = field(default_factory=utc_now_iso)
    trial_tokens: dict = field(default_factory=dict)
    trial_responses: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


# -- wire mapping -------------------------------------------------------------


def params_to_wire(params: ProcessParams) -> dict:
    return {
        "cutting_speed_mps": params.cutting_speed,
        "feed_rate_mmpm": params.feed_rate,
    }


def params_from_wire(data: dict) -> ProcessParams:
    return ProcessParams(
        cutting_speed=float(data["cutting_speed_mps"]),
        feed_rate=float(data["feed_rate_mmpm"]),
    )


def proposal_to_wire(proposal: Proposal) -> dict:
    return {**params_to_wire(proposal.params), "origin": proposal.origin}


def proposal_from_wire(data: dict) -> Proposal:
    return Proposal(params=params_from_wire(data), origin=data["origin"])


def trial_to_wire(trial: TrialRecord) -> dict:
    return {
        "index": trial.index,
        **params_to_wire(trial.params),
        "first_side_temp_C": trial.outcome.first_side_temperature,
        "max_roughness_nm": trial.outcome.max_roughness,
        "dressing_interval_inserts": trial.outcome.dressing_interval,
        "censored": trial.outcome.censored,
        "cost_U": trial.cost,
        "origin": trial.origin,
        "out_of_domain": trial.out_of_domain,
    }


def trial_from_wire(data: dict) -> TrialRecord:
    return TrialRecord(
        index=int(data["index"]),
        params=params_from_wire(data),
        outcome=TrialOutcome(
            first_side_temperature=float(data["first_side_temp_C"]),
            max_roughness=float(data["max_roughness_nm"]),
            dressing_interval=float(data["dressing_interval_inserts"]),
            censored=bool(data["censored"]),
        ),
        cost=float(data["cost_U"]),
        origin=data["origin"],
        out_of_domain=bool(data.get("out_of_domain", False)),
    )


def recommendation_to_wire(rec: Recommendation | None) -> dict | None:
    if rec is None:
        return None
    return {
        **params_to_wire(rec.params),
        "expected_cost_U": rec.expected_cost,
        "cost_ci_halfwidth_U": rec.cost_ci_halfwidth,
        "feasibility": dict(rec.feasibility),
    }


def recommendation_from_wire(data: dict | None) -> Recommendation | None:
    if data is None:
        return None
    return Recommendation(
        params=params_from_wire(data),
        expected_cost=float(data["expected_cost_U"]),
        cost_ci_halfwidth=float(data["cost_ci_halfwidth_U"]),
        feasibility={k: float(v) for k, v in data["feasibility"].items()},
    )


def convergence_to_wire(status: ConvergenceStatus) -> dict:
    return {
        "converged": status.converged,
        "criterion_value_U": status.criterion_value,
        "consecutive_hits": status.consecutive_hits,
        "recent_feed_span_mmpm": status.recent_feed_span,
        "recent_speed_span_mps": status.recent_speed_span,
    }


def convergence_from_wire(data: dict) -> ConvergenceStatus:
    return ConvergenceStatus(
        converged=bool(data["converged"]),
        criterion_value=data["criterion_value_U"],
        consecutive_hits=int(data["consecutive_hits"]),
        recent_feed_span=data["recent_feed_span_mmpm"],
        recent_speed_span=data["recent_speed_span_mps"],
    )


def config_to_wire(config: SessionConfig) -> dict:
    return {
        "domain": {
            "cutting_speed_mps": [config.domain.lower[0], config.domain.upper[0]],
            "feed_rate_mmpm": [config.domain.lower[1], config.domain.upper[1]],
        },
        "constraints": [
            {"name": c.name, "limit": c.limit, "p_min": c.p_min} for c in config.constraints
        ],
        "cost_params": asdict(config.cost_params),
        "epsilon_U": config.epsilon,
        "seed": config.seed,
        "max_trials": config.max_trials,
    }


def config_from_wire(data: dict) -> SessionConfig:
    domain_data = data["domain"]
    speed = domain_data["cutting_speed_mps"]
    feed = domain_data["feed_rate_mmpm"]
    return SessionConfig(
        domain=Domain(lower=(speed[0], feed[0]), upper=(speed[1], feed[1])),
        constraints=tuple(
            ConstraintSpec(name=c["name"], limit=float(c["limit"]), p_min=float(c["p_min"]))
            for c in data["constraints"]
        ),
        cost_params=CostParams(**data["cost_params"]),
        epsilon=float(data["epsilon_U"]),
        seed=int(data["seed"]),
        max_trials=int(data["max_trials"]),
    )


def hyperparams_to_wire(hypers: dict | None) -> dict | None:
    if not hypers:
        return None
    return {
        name: {
            "signal_variance": h.signal_variance,
            "length_scales": list(h.length_scales),
            "noise_variance": h.noise_variance,
        }
        for name, h in hypers.items()
    }


def hyperparams_from_wire(data: dict | None) -> dict | None:
    if not data:
        return None
    return {
        name: Hyperparams(
            signal_variance=float(h["signal_variance"]),
            length_scales=tuple(float(v) for v in h["length_scales"]),
            noise_variance=float(h["noise_variance"]),
        )
        for name, h in data.items()
    }


def document_to_dict(doc: SessionDocument) -> dict:
    session = doc.session
    data = {
        "schema_version": SCHEMA_VERSION,
        "session_id": doc.session_id,
        "created_at_utc": doc.created_at_utc,
        "updated_at_utc": doc.updated_at_utc,
        "config": config_to_wire(session.config),
        "trials": [trial_to_wire(t) for t in session.trials],
        "pending_proposals": [proposal_to_wire(p) for p in session.pending_proposals],
        "proposal_history": [proposal_to_wire(p) for p in session.proposal_history],
        "recommendations": [recommendation_to_wire(r) for r in session.recommendations],
        "convergence_history": [convergence_to_wire(s) for s in session.convergence_history],
        "model_hyperparameters": hyperparams_to_wire(session._model_hypers),
        "degraded": session.degraded,
    }
    if doc.trial_tokens:
        data["trial_tokens"] = dict(doc.trial_tokens)
    if doc.trial_responses:
        data["trial_responses"] = dict(doc.trial_responses)
    data.update(doc.extra)
    return data


def document_from_dict(data: dict) -> SessionDocument:
    config = config_from_wire(data["config"])
    session = Session(config)
    session.trials = [trial_from_wire(t) for t in data["trials"]]
    session.pending_proposals = [proposal_from_wire(p) for p in data["pending_proposals"]]
    session.proposal_history = [proposal_from_wire(p) for p in data["proposal_history"]]
    session.recommendations = [recommendation_from_wire(r) for r in data["recommendations"]]
    session.convergence_history = [
        convergence_from_wire(s) for s in data["convergence_history"]
    ]
    session.degraded = bool(data.get("degraded", False))
    hypers = hyperparams_from_wire(data.get("model_hyperparameters"))
    if hypers:
        # Models are rebuilt lazily from the stored hyperparameters; keep
        # them recorded so refit continuity survives the reload.
        session._model_hypers = hypers
    extra = {k: v for k, v in data.items() if k not in _KNOWN_FIELDS}
    return SessionDocument(
        session=session,
        session_id=data["session_id"],
        created_at_utc=data["created_at_utc"],
        updated_at_utc=data["updated_at_utc"],
        trial_tokens=dict(data.get("trial_tokens", {})),
        trial_responses=dict(data.get("trial_responses", {})),
        extra=extra,
    )


def ensure_models(doc: SessionDocument) -> None:
    """Rebuild fitted models for a loaded document when possible.

    Prefers the stored hyperparameters (exact and cheap; every persisted
    refit recorded them); falls back to a full deterministic refit for
    documents that predate model summaries.
    """
    session = doc.session
    if len(session.trials) < 2:
        return
    if session.models is not None and session._models_trial_count == len(session.trials):
        return
    if session._model_hypers is not None:
        session.restore_models(session._model_hypers)
    else:
        session.refit_models()


def dumps_document(doc: SessionDocument) -> str:
    return json.dumps(document_to_dict(doc), sort_keys=True, indent=2) + "\n"


def loads_document(text: str) -> SessionDocument:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise DocumentParseError(
            f"corrupt session document at byte offset {err.pos}: {err.msg}", offset=err.pos
        ) from err
    return document_from_dict(data)


class SessionStore:
    """Directory of session documents, one JSON file per session.

    Saves are atomic (temp file + rename), per-session writes serialize on
    an in-process lock, and loads always observe a committed document.
    """

    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self._locks: dict = {}
        self._locks_guard = threading.Lock()

    def _path(self, session_id: str) -> str:
        safe = session_id.replace("/", "_")
        return os.path.join(self.root, f"{safe}.json")

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def exists(self, session_id: str) -> bool:
        return os.path.exists(self._path(session_id))

    def list_ids(self) -> list:
        return sorted(
            name[:-5] for name in os.listdir(self.root) if name.endswith(".json")
        )

    def save(self, doc: SessionDocument) -> None:
        doc.updated_at_utc = utc_now_iso()
        payload = dumps_document(doc)
        path = self._path(doc.session_id)
        fd, tmp_path = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp_path, path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise

    def load(self, session_id: str) -> SessionDocument:
        path = self._path(session_id)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise SessionNotFoundError(session_id) from None
        return loads_document(text)


def write_document_file(doc: SessionDocument, path) -> None:
    """Atomic single-file write used by the CLI (outside a store directory)."""
    payload = dumps_document(doc)
    directory = os.path.dirname(os.path.abspath(str(path))) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp_path, str(path))
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_document_file(path) -> SessionDocument:
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            return loads_document(fh.read())
    except FileNotFoundError:
        raise SessionNotFoundError(str(path)) from None


def export_trial_log(session: Session) -> str:
    """Tabular trial log with the canonical header."""
    header = (
        "index,cutting_speed_mps,feed_rate_mmpm,first_side_temp_C,max_roughness_nm,"
        "dressing_interval_inserts,censored,cost_U,origin"
    )
    lines = [header]
    for t in session.trials:
        o = t.outcome
        lines.append(
            f"{t.index},{t.params.cutting_speed!r},{t.params.feed_rate!r},"
            f"{o.first_side_temperature!r},{o.max_roughness!r},"
            f"{o.dressing_interval!r},{str(o.censored).lower()},{t.cost!r},{t.origin}"
        )
    return "\n".join(lines) + "\n"
