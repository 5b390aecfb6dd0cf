"""HTTP facade for interactive labeling and run progress.

The task queue is the single synchronized source of truth: the Improver
blocks on `wait_for_all` while the UI answers tasks through the JSON
endpoints.  A task's answer is immutable once accepted; resubmitting the
same label is an idempotent ack, a different label is a conflict.
"""

from __future__ import annotations

import base64
import io
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import Conflict, HumanTimeout, LabelOutOfRange, UnknownTask


@dataclass
class LabelTask:
    task_id: int
    instance_id: int
    pixels: np.ndarray  # (h, w) floats in [0, 1]
    created_at: float
    status: str = "pending"      # "pending" | "answered"
    answer: int | None = None


class LabelTaskQueue:
    def __init__(self, num_classes: int = 10):
        self.num_classes = num_classes
        self._tasks: dict[int, LabelTask] = {}
        self._next_id = 1
        self._cond = threading.Condition()

    def enqueue_tasks(self, tasks: list[tuple[int, np.ndarray]]) -> list[int]:
        with self._cond:
            ids = []
            for instance_id, pixels in tasks:
                task = LabelTask(
                    task_id=self._next_id,
                    instance_id=int(instance_id),
                    pixels=np.asarray(pixels, dtype=np.float64),
                    created_at=time.time(),
                )
                self._tasks[task.task_id] = task
                ids.append(task.task_id)
                self._next_id += 1
            return ids

    def list_pending(self) -> list[LabelTask]:
        with self._cond:
            return [t for t in self._tasks.values() if t.status == "pending"]

    def pending_count(self) -> int:
        return len(self.list_pending())

    def submit_label(self, task_id: int, label: int) -> None:
        with self._cond:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"no task with id {task_id}")
            if not 0 <= label < self.num_classes:
                raise LabelOutOfRange(f"label {label} not in [0, {self.num_classes})")
            if task.status == "answered":
                if task.answer == label:
                    return  # idempotent resubmission
                raise Conflict(f"task {task_id} already answered with {task.answer}")
            task.status = "answered"
            task.answer = int(label)
            self._cond.notify_all()

    def wait_for_all(self, task_ids: list[int], timeout_s: float) -> dict[int, int]:
        """Block until every task in `task_ids` is answered; HumanTimeout otherwise."""
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while True:
                unanswered = [t for t in task_ids if self._tasks[t].status != "answered"]
                if not unanswered:
                    return {t: self._tasks[t].answer for t in task_ids}
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise HumanTimeout(f"{len(unanswered)} of {len(task_ids)} tasks unanswered")
                self._cond.wait(timeout=remaining)


class RunStatus:
    """Thread-safe snapshot of scenario progress for the /api endpoints."""

    def __init__(self):
        self._lock = threading.Lock()
        self._scenario = ""
        self._iterations = 0
        self._metrics: list[dict] = []

    def set_run_info(self, scenario: str, iterations: int) -> None:
        with self._lock:
            self._scenario = scenario
            self._iterations = iterations

    def record_iteration(self, metrics_row: dict) -> None:
        with self._lock:
            self._metrics.append(dict(metrics_row))

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "scenario": self._scenario,
                "iterations": self._iterations,
                "timestep": self._metrics[-1]["timestep"] if self._metrics else 0,
                "metrics": [dict(m) for m in self._metrics],
            }


def _png_b64(pixels: np.ndarray) -> str:
    from PIL import Image

    img = Image.fromarray(np.rint(pixels * 255.0).clip(0, 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


class LabelSubmission(BaseModel):
    label: int


def build_app(queue: LabelTaskQueue, status: RunStatus, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="trustloop labeling service")

    @app.get("/api/tasks")
    def list_tasks():
        return [
            {
                "task_id": t.task_id,
                "instance_id": t.instance_id,
                "png_b64": _png_b64(t.pixels),
                "pixels": t.pixels.ravel().tolist(),
            }
            for t in queue.list_pending()
        ]

    @app.post("/api/tasks/{task_id}/label")
    def submit(task_id: int, body: LabelSubmission):
        try:
            queue.submit_label(task_id, body.label)
        except UnknownTask as e:
            return JSONResponse(status_code=404, content={"ok": False, "error": str(e)})
        except LabelOutOfRange as e:
            return JSONResponse(status_code=400, content={"ok": False, "error": str(e)})
        except Conflict as e:
            return JSONResponse(status_code=409, content={"ok": False, "error": str(e)})
        return {"ok": True}

    @app.get("/api/status")
    def run_status():
        snap = status.snapshot()
        return {
            "scenario": snap["scenario"],
            "iterations": snap["iterations"],
            "timestep": snap["timestep"],
            "pending": queue.pending_count(),
        }

    @app.get("/api/metrics")
    def metrics():
        return status.snapshot()["metrics"]

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve_in_thread(app: FastAPI, port: int) -> threading.Thread:
    """Run uvicorn on a daemon thread (used by `run --human interactive`)."""
    import uvicorn

    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    return thread
