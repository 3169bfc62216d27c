"""Human-evaluation service: blinded audio pairs, rating collection, and
the two-section summary (perceptual scores + conversational rubrics).

The store is an append-only line-delimited file: durable, diffable, and a
restart reloads a store that summarizes identically. Blinding is a seeded
per-pair coin so positions are stable across restarts with the same seed.
"""

from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

from pydantic import BaseModel, Field

from .core import DuplexkitError

HUMAN = "HUMAN"
MODEL = "MODEL"
PREFERENCES = ("A", "B", "TIE")
RUBRIC_KEYS = ("human_like", "appropriate", "complete")


class RatingError(DuplexkitError):
    pass


class DuplicateRatingError(RatingError):
    pass


class UnknownPairError(RatingError):
    pass


@dataclass(frozen=True)
class EvalPair:
    pair_id: str
    human_ref: str
    model_ref: str
    human_position: str  # "A" or "B", fixed by the blinding seed

    @property
    def ref_a(self) -> str:
        return self.human_ref if self.human_position == "A" else self.model_ref

    @property
    def ref_b(self) -> str:
        return self.model_ref if self.human_position == "A" else self.human_ref

    def origin_of(self, position: str) -> str:
        if position == "TIE":
            return "TIE"
        return HUMAN if position == self.human_position else MODEL


def blind_position(seed: int, pair_id: str) -> str:
    """Deterministic per-pair position of the human clip."""
    h = zlib.crc32(f"{seed}:{pair_id}".encode("utf-8"))
    return "A" if h & 1 else "B"


def load_pairs(manifest_path: str | Path, seed: int) -> list[EvalPair]:
    """Pair manifest: line-delimited {pair_id, human, model} audio refs."""
    pairs = []
    with open(manifest_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            pid = str(d["pair_id"])
            pairs.append(EvalPair(pair_id=pid, human_ref=d["human"], model_ref=d["model"],
                                  human_position=blind_position(seed, pid)))
    pairs.sort(key=lambda p: p.pair_id)
    ids = [p.pair_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise RatingError("duplicate pair ids in manifest")
    return pairs


@dataclass(frozen=True)
class RatingRecord:
    pair_id: str
    rater_id: str
    naturalness_a: int
    naturalness_b: int
    clarity_a: int
    clarity_b: int
    preference: str  # A / B / TIE
    human_like: bool
    appropriate: bool
    complete: bool
    timestamp: float = 0.0

    def __post_init__(self):
        for name in ("naturalness_a", "naturalness_b", "clarity_a", "clarity_b"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 1 <= v <= 5:
                raise RatingError(f"{name} must be an integer in [1, 5], got {v!r}")
        if self.preference not in PREFERENCES:
            raise RatingError(f"preference must be one of {PREFERENCES}")
        if not self.pair_id or not self.rater_id:
            raise RatingError("pair_id and rater_id must be non-empty")


@dataclass
class Summary:
    n_ratings: int = 0
    naturalness_human: float | None = None
    naturalness_model: float | None = None
    clarity_human: float | None = None
    clarity_model: float | None = None
    preference_human_pct: float = 0.0
    preference_model_pct: float = 0.0
    preference_tie_pct: float = 0.0
    rubric_pass_rates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class RatingStore:
    """Append-only rating log with exclusive, ordered appends."""

    def __init__(self, path: str | Path, pairs: list[EvalPair]):
        self.path = Path(path)
        self.pairs = {p.pair_id: p for p in pairs}
        self.ordered_pairs = sorted(pairs, key=lambda p: p.pair_id)
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], RatingRecord] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = RatingRecord(**json.loads(line))
                        self._records[(rec.pair_id, rec.rater_id)] = rec

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[RatingRecord]:
        return list(self._records.values())

    def next_pair(self, rater_id: str) -> EvalPair | None:
        """Lowest-id pair this rater has not rated; None when done."""
        if not rater_id:
            raise RatingError("rater id must be non-empty")
        with self._lock:
            for pair in self.ordered_pairs:
                if (pair.pair_id, rater_id) not in self._records:
                    return pair
        return None

    def completed_count(self, rater_id: str) -> int:
        return sum(1 for (_, rid) in self._records if rid == rater_id)

    def submit(self, record: RatingRecord) -> None:
        if record.pair_id not in self.pairs:
            raise UnknownPairError(f"unknown pair {record.pair_id!r}")
        key = (record.pair_id, record.rater_id)
        with self._lock:
            if key in self._records:
                raise DuplicateRatingError(
                    f"rater {record.rater_id!r} already rated pair {record.pair_id!r}")
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record)) + "\n")
            self._records[key] = record

    def summarize(self) -> Summary:
        return summarize(self.records(), self.pairs)


def summarize(records: list[RatingRecord], pairs: dict[str, EvalPair]) -> Summary:
    """Un-blind positions back to origins and aggregate.

    Rubric booleans judge the model clip, so pass rate is simply the
    fraction true. Order-invariant over the record list.
    """
    if not records:
        return Summary(n_ratings=0,
                       rubric_pass_rates={k: None for k in RUBRIC_KEYS})
    nat = {HUMAN: [], MODEL: []}
    clar = {HUMAN: [], MODEL: []}
    pref = {HUMAN: 0, MODEL: 0, "TIE": 0}
    rubric_true = dict.fromkeys(RUBRIC_KEYS, 0)
    for rec in records:
        pair = pairs.get(rec.pair_id)
        if pair is None:
            raise UnknownPairError(f"record references unknown pair {rec.pair_id!r}")
        by_pos = {"A": (rec.naturalness_a, rec.clarity_a),
                  "B": (rec.naturalness_b, rec.clarity_b)}
        for pos, (n, c) in by_pos.items():
            origin = pair.origin_of(pos)
            nat[origin].append(n)
            clar[origin].append(c)
        pref[pair.origin_of(rec.preference)] += 1
        for key in RUBRIC_KEYS:
            rubric_true[key] += bool(getattr(rec, key))
    n = len(records)
    return Summary(
        n_ratings=n,
        naturalness_human=sum(nat[HUMAN]) / n,
        naturalness_model=sum(nat[MODEL]) / n,
        clarity_human=sum(clar[HUMAN]) / n,
        clarity_model=sum(clar[MODEL]) / n,
        preference_human_pct=100.0 * pref[HUMAN] / n,
        preference_model_pct=100.0 * pref[MODEL] / n,
        preference_tie_pct=100.0 * pref["TIE"] / n,
        rubric_pass_rates={k: rubric_true[k] / n for k in RUBRIC_KEYS},
    )


# module-level so FastAPI can resolve the (stringified) annotation
class RatingBody(BaseModel):
    pair_id: str
    rater_id: str
    naturalness_a: int = Field(ge=1, le=5)
    naturalness_b: int = Field(ge=1, le=5)
    clarity_a: int = Field(ge=1, le=5)
    clarity_b: int = Field(ge=1, le=5)
    preference: str
    human_like: bool
    appropriate: bool
    complete: bool


def create_app(store: RatingStore, audio_dir: str | Path):
    """FastAPI app over a rating store.

    GET /api/pairs/next?rater=ID - blinded pair view or {"done": true}
    POST /api/ratings            - 201 created / 409 duplicate / 422 invalid
    GET /api/summary             - aggregate Summary
    GET /audio/{ref}             - WAV bytes
    """
    import time

    from fastapi import FastAPI, HTTPException, Query
    from fastapi.responses import FileResponse, JSONResponse

    audio_dir = Path(audio_dir)
    app = FastAPI(title="duplexkit rating service")

    @app.get("/api/pairs/next")
    def next_pair(rater: str = Query(..., min_length=1)):
        pair = store.next_pair(rater)
        if pair is None:
            return JSONResponse({"done": True,
                                 "completed": store.completed_count(rater)})
        return {"pair_id": pair.pair_id, "audio_a": pair.ref_a, "audio_b": pair.ref_b,
                "completed": store.completed_count(rater),
                "total": len(store.ordered_pairs)}

    @app.post("/api/ratings", status_code=201)
    def submit_rating(body: RatingBody):
        try:
            record = RatingRecord(timestamp=time.time(), **body.model_dump())
            store.submit(record)
        except DuplicateRatingError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnknownPairError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except RatingError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"stored": True, "n_ratings": len(store)}

    @app.get("/api/summary")
    def get_summary():
        return store.summarize().to_dict()

    @app.get("/audio/{ref}")
    def get_audio(ref: str):
        target = (audio_dir / ref).resolve()
        if not str(target).startswith(str(audio_dir.resolve())) or not target.is_file():
            raise HTTPException(status_code=404, detail=f"no such clip {ref!r}")
        return FileResponse(target, media_type="audio/wav")

    return app
