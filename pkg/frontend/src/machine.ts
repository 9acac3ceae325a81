/** Operator console state machine.
 *
 * Idle -> Baseline -> Sampling -> AwaitingResult -> Result, with stop
 * permitted only while frames are still arriving (Baseline/Sampling).
 * The machine is a pure reducer so the UI layer and the tests drive
 * the exact same transitions; anything the UI must never do throws
 * IllegalTransition instead of being silently absorbed.
 */

import type { AcquisitionSnapshot, ClassificationResult, Phase } from "./types.js";

export type StateKind = "idle" | "baseline" | "sampling" | "awaiting-result" | "result";

export interface OperatorState {
  kind: StateKind;
  acquisitionId: string | null;
  /** operator asked for a stop; cleared when the session settles */
  stopRequested: boolean;
  result: ClassificationResult | null;
  /** sticky banner text (errors, discard confirmations); cleared on start */
  notice: string | null;
}

export type OperatorEvent =
  | { type: "started"; acquisitionId: string }
  | { type: "frame"; phase: Phase }
  | { type: "stream-ended"; snapshot: AcquisitionSnapshot }
  | { type: "result"; result: ClassificationResult }
  | { type: "stop-requested" }
  | { type: "reset" };

export class IllegalTransition extends Error {
  constructor(state: StateKind, event: string) {
    super(`event ${event} not allowed in state ${state}`);
  }
}

export function idleState(): OperatorState {
  return { kind: "idle", acquisitionId: null, stopRequested: false, result: null, notice: null };
}

export function canStop(state: OperatorState): boolean {
  return (state.kind === "baseline" || state.kind === "sampling") && !state.stopRequested;
}

export function transition(state: OperatorState, event: OperatorEvent): OperatorState {
  switch (event.type) {
    case "started":
      if (state.kind !== "idle") throw new IllegalTransition(state.kind, event.type);
      return { ...idleState(), kind: "baseline", acquisitionId: event.acquisitionId };

    case "frame":
      if (state.kind === "baseline") {
        return event.phase === "sampling" ? { ...state, kind: "sampling" } : state;
      }
      if (state.kind === "sampling") return state;
      throw new IllegalTransition(state.kind, event.type);

    case "stream-ended": {
      const snap = event.snapshot;
      if (snap.state === "stopped") {
        if (state.kind !== "baseline" && state.kind !== "sampling") {
          throw new IllegalTransition(state.kind, event.type);
        }
        return { ...idleState(), notice: "measurement stopped, record discarded" };
      }
      if (snap.state === "failed") {
        if (state.kind === "idle" || state.kind === "result") {
          throw new IllegalTransition(state.kind, event.type);
        }
        return { ...idleState(), notice: `acquisition failed: ${snap.error ?? "unknown error"}` };
      }
      // a completed run always passes through awaiting-result, even when
      // the end snapshot already carries the classification
      if (state.kind !== "sampling") throw new IllegalTransition(state.kind, event.type);
      return { ...state, kind: "awaiting-result" };
    }

    case "result":
      if (state.kind !== "awaiting-result") throw new IllegalTransition(state.kind, event.type);
      return { ...state, kind: "result", result: event.result };

    case "stop-requested":
      if (!canStop(state)) throw new IllegalTransition(state.kind, event.type);
      return { ...state, stopRequested: true };

    case "reset":
      if (state.kind !== "result" && state.kind !== "idle") {
        throw new IllegalTransition(state.kind, event.type);
      }
      return { ...idleState(), notice: state.notice };
  }
}
