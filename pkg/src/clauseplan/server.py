"""Local review service over an outcome bundle.

Read endpoints reflect the bundle files; posting a gate resolution replays
the deterministic pipeline with the recorded resolution log plus the new
resolution, then persists the updated bundle. Mutations are serialized per
run; reads are lock-free snapshots of the files on disk.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .corpus import EvidenceSpan, load_corpus, resolve_span
from .errors import ClosedGate, OutOfRange, UnknownDocument, UnknownGate
from .orchestrate import (
    GateResolution,
    PipelineConfig,
    PipelineRun,
    write_outcome,
)
from .planmodel import instance_from_json
from .schema import load_master


class RunDirectory:
    """One persisted run; resolution replays rebuild it deterministically."""

    def __init__(self, bundle: Path):
        self.bundle = Path(bundle)
        self.lock = threading.Lock()
        config = self._read("config.json")
        if config is None:
            raise FileNotFoundError(f"no config.json in {bundle}")
        self.config = config
        inputs = config.get("inputs", {})
        self.corpus = load_corpus(inputs["corpus"]) if "corpus" in inputs else None
        self.resumable = {"corpus", "master", "instance"} <= set(inputs)

    def _read(self, name: str):
        path = self.bundle / name
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def run_info(self) -> dict:
        info = self._read("run.json") or {}
        info["open_gates"] = len(self._read("gates.json") or [])
        return info

    def cards(self) -> list:
        return self._read("cards.json") or []

    def gates(self) -> list:
        return self._read("gates.json") or []

    def resolutions(self) -> list:
        return self._read("resolutions.json") or []

    def _rebuild(self) -> PipelineRun:
        inputs = self.config["inputs"]
        corpus = load_corpus(inputs["corpus"])
        master = load_master(inputs["master"])
        instance = instance_from_json(inputs["instance"])
        run = PipelineRun(corpus, master, instance,
                          PipelineConfig.from_json(self.config))
        run.run()
        for row in self.resolutions():
            run.resume(GateResolution(
                gate_id=row["gate_id"], option_id=row.get("option_id"),
                attested_value=row.get("attested_value"),
                note=row.get("note", ""),
                resolved_by=row.get("resolved_by", "reviewer"),
                resolved_at=row.get("resolved_at"),
            ))
        return run

    def resolve(self, gate_id: str, payload: dict) -> dict:
        option_id = payload.get("option_id")
        attested = payload.get("attested_value")
        note = payload.get("note", "")
        if (option_id is None) == (attested is None):
            raise ValueError("provide exactly one of option_id or attested_value")
        if attested is not None and not note:
            raise ValueError("attested values require a non-empty note")
        with self.lock:
            if any(r["gate_id"] == gate_id for r in self.resolutions()):
                raise ClosedGate(f"gate {gate_id} already resolved")
            if not self.resumable:
                raise ValueError("bundle is not resumable (no planning instance)")
            run = self._rebuild()
            resolution = GateResolution(
                gate_id=gate_id, option_id=option_id, attested_value=attested,
                note=note,
                resolved_by=payload.get("resolved_by", "reviewer"),
                resolved_at=datetime.now(timezone.utc).isoformat(),
            )
            outcome = run.resume(resolution)
            write_outcome(outcome, self.bundle, corpus=run.corpus,
                          inputs=self.config.get("inputs"))
            return {"run_id": outcome.run_id, "status": outcome.status,
                    "open_gates": len(outcome.gates)}


def build_app(bundle_dir: Path, ui_dir: Path | None = None) -> FastAPI:
    rundir = RunDirectory(bundle_dir)
    app = FastAPI(title="clauseplan review service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def _run_id() -> str:
        return (rundir._read("run.json") or {}).get("run_id", "")

    @app.get("/runs")
    def list_runs():
        return [rundir.run_info()]

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        if run_id != _run_id():
            raise HTTPException(status_code=404, detail="unknown run")
        return rundir.run_info()

    @app.get("/runs/{run_id}/cards")
    def get_cards(run_id: str):
        if run_id != _run_id():
            raise HTTPException(status_code=404, detail="unknown run")
        return rundir.cards()

    @app.get("/gates")
    def list_gates():
        return rundir.gates()

    @app.get("/gates/{gate_id}")
    def get_gate(gate_id: str):
        for gate in rundir.gates():
            if gate["gate_id"] == gate_id:
                return gate
        raise HTTPException(status_code=404, detail="unknown gate")

    @app.post("/gates/{gate_id}/resolution")
    async def post_resolution(gate_id: str, request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            return JSONResponse({"detail": "malformed JSON body"}, status_code=422)
        known = any(g["gate_id"] == gate_id for g in rundir.gates())
        resolved = any(r["gate_id"] == gate_id for r in rundir.resolutions())
        if not known and not resolved:
            raise HTTPException(status_code=404, detail="unknown gate")
        try:
            return rundir.resolve(gate_id, payload)
        except ClosedGate as exc:
            return JSONResponse({"detail": str(exc)}, status_code=409)
        except UnknownGate as exc:
            return JSONResponse({"detail": str(exc)}, status_code=404)
        except (ValueError, KeyError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)

    @app.get("/documents/{doc_id}/{version}/span")
    def get_span(doc_id: str, version: str, start: int = Query(ge=0), end: int = Query(gt=0)):
        if rundir.corpus is None:
            raise HTTPException(status_code=404, detail="bundle has no corpus")
        try:
            text = resolve_span(rundir.corpus,
                                EvidenceSpan(doc_id, version, start, end))
        except UnknownDocument as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except OutOfRange as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)
        return {"doc_id": doc_id, "version": version, "start": start,
                "end": end, "text": text}

    if ui_dir is not None and ui_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
