/**
 * DOM wiring: poll tasks and metrics every 2 s, render the task grid and
 * the progress chart, translate keystrokes into board actions.
 */

import { ApiClient } from "./api.js";
import { renderChart } from "./chart.js";
import {
  Board,
  canSubmit,
  chooseLabel,
  emptyBoard,
  focusedTask,
  keyToAction,
  markOutcome,
  markSubmitting,
  mergeTasks,
  moveFocus,
  pendingCount,
} from "./state.js";

const POLL_MS = 2000;

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "");

let board: Board = emptyBoard();
let offline = false;

const grid = document.getElementById("tasks") as HTMLDivElement;
const statusLine = document.getElementById("status") as HTMLDivElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const chart = document.getElementById("chart") as HTMLCanvasElement;

function render(): void {
  banner.style.display = offline ? "block" : "none";
  grid.innerHTML = "";
  board.tasks.forEach((task, index) => {
    const card = document.createElement("div");
    card.className = `card ${task.status}${index === board.focus ? " focused" : ""}`;
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${task.png_b64}`;
    img.alt = `instance ${task.instance_id}`;
    card.appendChild(img);
    const caption = document.createElement("div");
    caption.className = "caption";
    caption.textContent =
      task.status === "submitted" ? `✓ ${task.chosen}`
      : task.status === "conflict" ? "already labeled"
      : task.status === "error" ? task.message
      : task.chosen !== null ? `label ${task.chosen} — Enter to send`
      : `#${task.instance_id}`;
    card.appendChild(caption);
    card.onclick = () => {
      board = { ...board, focus: index };
      render();
    };
    grid.appendChild(card);
  });
}

async function submitFocused(): Promise<void> {
  const task = focusedTask(board);
  if (!canSubmit(task)) return;
  const { task_id, chosen } = task;
  board = markSubmitting(board, task_id);
  render();
  try {
    const result = await api.submitLabel(task_id, chosen);
    board =
      result.kind === "ok"
        ? markOutcome(board, task_id, "submitted")
        : result.kind === "conflict"
          ? markOutcome(board, task_id, "conflict", result.message)
          : markOutcome(board, task_id, "error", result.message);
  } catch {
    board = markOutcome(board, task_id, "error", "network error — retrying allowed");
  }
  render();
}

window.addEventListener("keydown", (event) => {
  const action = keyToAction(event.key);
  if (action.kind === "none") return;
  event.preventDefault();
  if (action.kind === "choose") board = chooseLabel(board, action.digit);
  else if (action.kind === "move") board = moveFocus(board, action.step);
  else if (action.kind === "submit") {
    void submitFocused();
    return;
  }
  render();
});

async function poll(): Promise<void> {
  try {
    const [tasks, status, metrics] = await Promise.all([
      api.pollTasks(),
      api.status(),
      api.metrics(),
    ]);
    offline = false;
    board = mergeTasks(board, tasks);
    statusLine.textContent =
      `${status.scenario || "idle"} — timestep ${status.timestep}/${status.iterations}` +
      ` — ${pendingCount(board)} awaiting labels`;
    renderChart(chart, metrics);
  } catch {
    offline = true;
  }
  render();
}

void poll();
setInterval(() => void poll(), POLL_MS);
