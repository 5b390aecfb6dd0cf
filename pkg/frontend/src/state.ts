/**
 * Pure task-board state: polling merges, keyboard handling, submit
 * lifecycle.  No DOM access here so every transition is unit-testable.
 */

import type { TaskPayload } from "./api.js";

export type TaskStatus = "pending" | "submitting" | "submitted" | "conflict" | "error";

export interface TaskView {
  task_id: number;
  instance_id: number;
  png_b64: string;
  chosen: number | null;
  status: TaskStatus;
  message: string;
}

export interface Board {
  tasks: TaskView[];
  focus: number; // index into tasks; -1 when empty
}

export function emptyBoard(): Board {
  return { tasks: [], focus: -1 };
}

/**
 * Merge a freshly polled task list into the board.  Local state (chosen
 * label, submit status) survives; tasks answered elsewhere disappear from
 * the server list and are dropped unless they are mid-flight here.
 */
export function mergeTasks(board: Board, polled: TaskPayload[]): Board {
  const known = new Map(board.tasks.map((t) => [t.task_id, t]));
  const merged: TaskView[] = polled.map((p) => {
    const existing = known.get(p.task_id);
    return (
      existing ?? {
        task_id: p.task_id,
        instance_id: p.instance_id,
        png_b64: p.png_b64,
        chosen: null,
        status: "pending",
        message: "",
      }
    );
  });
  const polledIds = new Set(polled.map((p) => p.task_id));
  for (const t of board.tasks) {
    if (!polledIds.has(t.task_id) && t.status !== "pending") merged.push(t);
  }
  merged.sort((a, b) => a.task_id - b.task_id);

  const focusedId = board.focus >= 0 ? board.tasks[board.focus]?.task_id : undefined;
  let focus = merged.findIndex((t) => t.task_id === focusedId);
  if (focus < 0) focus = merged.findIndex((t) => t.status === "pending");
  if (focus < 0) focus = merged.length ? 0 : -1;
  return { tasks: merged, focus };
}

export function focusedTask(board: Board): TaskView | undefined {
  return board.focus >= 0 ? board.tasks[board.focus] : undefined;
}

export function moveFocus(board: Board, step: 1 | -1): Board {
  if (!board.tasks.length) return board;
  const n = board.tasks.length;
  return { ...board, focus: (board.focus + step + n) % n };
}

export function chooseLabel(board: Board, digit: number): Board {
  const task = focusedTask(board);
  if (!task || task.status === "submitted" || task.status === "submitting") return board;
  if (digit < 0 || digit > 9) return board;
  return replaceTask(board, task.task_id, { ...task, chosen: digit, status: "pending", message: "" });
}

/** Submit is only legal once a label has been chosen. */
export function canSubmit(task: TaskView | undefined): task is TaskView & { chosen: number } {
  return !!task && task.chosen !== null && (task.status === "pending" || task.status === "error");
}

export function markSubmitting(board: Board, taskId: number): Board {
  const task = board.tasks.find((t) => t.task_id === taskId);
  if (!task) return board;
  return replaceTask(board, taskId, { ...task, status: "submitting" });
}

export function markOutcome(
  board: Board,
  taskId: number,
  outcome: "submitted" | "conflict" | "error",
  message = "",
): Board {
  const task = board.tasks.find((t) => t.task_id === taskId);
  if (!task) return board;
  const next = replaceTask(board, taskId, { ...task, status: outcome, message });
  if (outcome === "submitted" || outcome === "conflict") {
    // advance focus to the next task still awaiting a label
    const idx = next.tasks.findIndex((t) => t.task_id === taskId);
    for (let offset = 1; offset <= next.tasks.length; offset++) {
      const candidate = next.tasks[(idx + offset) % next.tasks.length];
      if (candidate.status === "pending" || candidate.status === "error") {
        return { ...next, focus: next.tasks.indexOf(candidate) };
      }
    }
  }
  return next;
}

export function pendingCount(board: Board): number {
  return board.tasks.filter((t) => t.status === "pending" || t.status === "error").length;
}

function replaceTask(board: Board, taskId: number, task: TaskView): Board {
  return {
    ...board,
    tasks: board.tasks.map((t) => (t.task_id === taskId ? task : t)),
  };
}

export type KeyAction =
  | { kind: "choose"; digit: number }
  | { kind: "submit" }
  | { kind: "move"; step: 1 | -1 }
  | { kind: "none" };

/** Keyboard map: digits choose, Enter submits, arrows/j/k navigate. */
export function keyToAction(key: string): KeyAction {
  if (/^[0-9]$/.test(key)) return { kind: "choose", digit: Number(key) };
  if (key === "Enter") return { kind: "submit" };
  if (key === "ArrowRight" || key === "j") return { kind: "move", step: 1 };
  if (key === "ArrowLeft" || key === "k") return { kind: "move", step: -1 };
  return { kind: "none" };
}
