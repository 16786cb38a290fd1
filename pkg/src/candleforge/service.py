"""HTTP service for interactive what-if chart generation.

Windows, charts, and on-demand scenario generation with prompt overrides.
Scenario images are content-addressed by their resolved request (seed
included), so repeated what-ifs are cache hits. Generation runs on a bounded
worker pool; requests beyond the queue get 429.
"""

from __future__ import annotations

import io
import json
import secrets
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .chart_renderer import render_window
from .config import RunConfig
from .dataset_builder import format_prompt, label_from_prices
from .diffusion import DiffusionModel, SamplerConfig
from .evaluation import classify_mark, read_mark
from .market_data import CandleSeries
from .pipeline import WindowIndex, load_split
from .util import content_hash


class ScenarioRequest(BaseModel):
    window_id: int
    rsi_override: float | None = None
    macd_override: float | None = None
    seed: int | None = None
    steps: int | None = None
    text_guidance: float | None = None
    image_guidance: float | None = None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ScenarioService:
    """Owns the loaded series, model weights, and the append-only scenario store."""

    def __init__(self, cfg: RunConfig, model: DiffusionModel, series: CandleSeries,
                 store_dir, metrics_path=None):
        self.cfg = cfg
        self.model = model
        self.index = WindowIndex(series, cfg.dataset.window_len, cfg.dataset.lookahead)
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self._scenarios: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=cfg.service.workers)
        self._slots = threading.Semaphore(cfg.service.workers + cfg.service.queue_size)

    # ---- window catalogue -------------------------------------------------

    def window_summary(self, n: int) -> dict:
        rsi, macd = self.index.indicators_at(n)
        candle = self.index.series.candles[n]
        return {
            "id": n,
            "open_time": candle.open_time,
            "close": str(candle.close),
            "rsi": round(rsi, 2),
            "macd": round(macd, 2),
            "has_ground_truth": self.index.has_ground_truth(n),
        }

    def list_windows(self, time_from=None, time_to=None, page=0, page_size=100) -> dict:
        ids = [n for n in self.index.ids()
               if (time_from is None or self.index.series.candles[n].open_time >= time_from)
               and (time_to is None or self.index.series.candles[n].open_time <= time_to)]
        start = page * page_size
        chunk = ids[start:start + page_size]
        return {
            "windows": [self.window_summary(n) for n in chunk],
            "total": len(ids),
            "page": page,
            "page_size": page_size,
            # the ground-truth chart for window n is the input chart of
            # window n + lookahead, served by the same chart route
            "lookahead": self.index.lookahead,
        }

    def chart_png(self, n: int) -> bytes:
        if not self.index.valid(n):
            raise ApiError(404, "not_found", f"unknown window id {n}")
        chart = render_window(self.index.window(n), marker=None, style=self.cfg.style)
        buf = io.BytesIO()
        Image.fromarray(chart.pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    # ---- scenarios --------------------------------------------------------

    def _resolve(self, req: ScenarioRequest) -> dict:
        if not self.index.valid(req.window_id):
            raise ApiError(404, "not_found", f"unknown window id {req.window_id}")
        if req.rsi_override is not None and not (0.0 <= req.rsi_override <= 100.0):
            raise ApiError(422, "invalid_request",
                           f"rsi_override must be in [0, 100], got {req.rsi_override}")
        if req.macd_override is not None and not np.isfinite(req.macd_override):
            raise ApiError(422, "invalid_request", "macd_override must be finite")
        steps = self.cfg.sampler.steps if req.steps is None else req.steps
        if not (1 <= steps <= self.model.schedule_T):
            raise ApiError(422, "invalid_request",
                           f"steps must be in [1, {self.model.schedule_T}], got {steps}")
        for name in ("text_guidance", "image_guidance"):
            v = getattr(req, name)
            if v is not None and not np.isfinite(v):
                raise ApiError(422, "invalid_request", f"{name} must be finite")
        rsi, macd = self.index.indicators_at(req.window_id)
        if req.rsi_override is not None:
            rsi = req.rsi_override
        if req.macd_override is not None:
            macd = req.macd_override
        return {
            "window_id": req.window_id,
            "prompt": format_prompt(rsi, macd),
            "seed": secrets.randbits(32) if req.seed is None else req.seed,
            "steps": steps,
            "text_guidance": self.cfg.sampler.text_guidance
            if req.text_guidance is None else req.text_guidance,
            "image_guidance": self.cfg.sampler.image_guidance
            if req.image_guidance is None else req.image_guidance,
        }

    def _run_generation(self, scenario_id: str, resolved: dict) -> dict:
        window = self.index.window(resolved["window_id"])
        input_image = render_window(window, marker=None, style=self.cfg.style).pixels
        sampler = SamplerConfig(steps=resolved["steps"],
                                text_guidance=resolved["text_guidance"],
                                image_guidance=resolved["image_guidance"],
                                seed=resolved["seed"])
        generated = self.model.generate(input_image, resolved["prompt"], sampler)
        Image.fromarray(generated, mode="RGB").save(self.store_dir / f"{scenario_id}.png",
                                                    format="PNG")
        predicted = classify_mark(read_mark(generated, self.cfg.style),
                                  self.cfg.style.marker_palette)

        n = resolved["window_id"]
        ground_truth = None
        if self.index.has_ground_truth(n):
            c0 = self.index.series.candles[n].close
            c3 = self.index.series.candles[n + self.index.lookahead].close
            ground_truth = label_from_prices(c0, c3).color_name

        return {
            "scenario_id": scenario_id,
            "window_id": n,
            "image_path": f"/api/images/{scenario_id}.png",
            "predicted_label": predicted.color_name,
            "ground_truth_label": ground_truth,
            "prompt": resolved["prompt"],
            "seed": resolved["seed"],
            "steps": resolved["steps"],
            "text_guidance": resolved["text_guidance"],
            "image_guidance": resolved["image_guidance"],
        }

    def generate_scenario(self, req: ScenarioRequest) -> dict:
        resolved = self._resolve(req)
        scenario_id = content_hash(resolved)
        with self._lock:
            hit = self._scenarios.get(scenario_id)
        if hit is not None:
            return {**hit, "cached": True}

        if not self._slots.acquire(blocking=False):
            raise ApiError(429, "queue_full",
                           "generation queue is full; retry in a moment")
        try:
            future = self._executor.submit(self._run_generation, scenario_id, resolved)
            result = future.result()
        finally:
            self._slots.release()
        with self._lock:
            self._scenarios.setdefault(scenario_id, result)
        return {**result, "cached": False}

    def scenario_png(self, scenario_id: str) -> bytes:
        if not scenario_id.isalnum():
            raise ApiError(404, "not_found", f"no image for scenario {scenario_id}")
        path = self.store_dir / f"{scenario_id}.png"
        if not path.exists():
            raise ApiError(404, "not_found", f"no image for scenario {scenario_id}")
        return path.read_bytes()

    def metrics(self) -> dict:
        if self.metrics_path is None or not self.metrics_path.exists():
            raise ApiError(404, "not_found", "no metrics report available yet")
        return json.loads(self.metrics_path.read_text(encoding="utf-8"))


def _parse_int(value, name: str):
    if value is None:
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ApiError(400, "bad_request", f"query param {name!r} must be an integer")


def create_app(service: ScenarioService, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="candleforge scenario service")

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return _error(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", str(exc.errors()))

    @app.get("/api/health")
    def health():
        return {"status": "ok", "windows": len(list(service.index.ids()))}

    @app.get("/api/windows")
    def windows(request: Request):
        q = request.query_params
        time_from = _parse_int(q.get("from"), "from")
        time_to = _parse_int(q.get("to"), "to")
        page = _parse_int(q.get("page"), "page") or 0
        page_size = _parse_int(q.get("page_size"), "page_size") or 100
        if page < 0 or page_size < 1:
            raise ApiError(400, "bad_request", "page must be >= 0 and page_size >= 1")
        return service.list_windows(time_from, time_to, page, page_size)

    @app.get("/api/windows/{window_id}/chart.png")
    def window_chart(window_id: int):
        return Response(content=service.chart_png(window_id), media_type="image/png")

    @app.post("/api/scenarios")
    def scenarios(req: ScenarioRequest):
        return service.generate_scenario(req)

    @app.get("/api/images/{scenario_id}.png")
    def scenario_image(scenario_id: str):
        return Response(content=service.scenario_png(scenario_id), media_type="image/png")

    @app.get("/api/metrics")
    def metrics():
        return service.metrics()

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app


def build_service(cfg: RunConfig) -> FastAPI:
    """Load series + checkpoint per config and return the ASGI app."""
    series = load_split(cfg, "train")
    model = DiffusionModel.load(cfg.paths.checkpoint)
    results_dir = Path(cfg.paths.results_dir)
    service = ScenarioService(cfg, model, series,
                              store_dir=results_dir / "scenarios",
                              metrics_path=results_dir / "metrics.json")
    return create_app(service, frontend_dir=cfg.service.frontend_dir)
