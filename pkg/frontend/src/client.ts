/**
 * Protocol client: owns the socket, keeps only the latest state message
 * (stale frames are dropped, the render loop never queues), reconnects with
 * exponential backoff, and rate-limits outbound set_target traffic to the
 * service tick rate.
 *
 * The socket and clock are injected so the whole state machine runs under
 * test without a browser or a server.
 */
import {
  ClientMessage,
  Condition,
  DemoGroup,
  encodeClientMessage,
  parseServerMessage,
  StateMessage,
  Vec3,
} from "./protocol.js";

/** The subset of WebSocket the client needs; browser WebSocket satisfies it. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
}

export interface Scheduler {
  now(): number;
  setTimeout(fn: () => void, ms: number): number;
  clearTimeout(id: number): void;
}

export type ConnectionStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface ClientOptions {
  /** Minimum interval between set_target frames, ms. Matches the 50 Hz tick. */
  targetIntervalMs?: number;
  /** First reconnect delay, ms; doubles per failure up to maxBackoffMs. */
  baseBackoffMs?: number;
  maxBackoffMs?: number;
  scheduler?: Scheduler;
}

const realScheduler: Scheduler = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms) as unknown as number,
  clearTimeout: (id) => clearTimeout(id),
};

export class TeleopClient {
  /** Most recent state frame; older frames are discarded on arrival. */
  latest: StateMessage | null = null;
  status: ConnectionStatus = "closed";
  /** Count of state frames replaced before ever being rendered. */
  droppedFrames = 0;
  stateFrames = 0;

  onStatus: ((status: ConnectionStatus) => void) | null = null;
  onError: ((detail: string) => void) | null = null;
  onSaved: ((path: string) => void) | null = null;

  private socket: SocketLike | null = null;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly url: string;
  private readonly sched: Scheduler;
  private readonly targetIntervalMs: number;
  private readonly baseBackoffMs: number;
  private readonly maxBackoffMs: number;

  private backoffMs: number;
  private reconnectTimer: number | null = null;
  private flushTimer: number | null = null;
  private lastTargetSentAt = -Infinity;
  private pendingTarget: Vec3 | null = null;
  private consumed = true;
  private stopped = false;

  constructor(
    url: string,
    makeSocket: (url: string) => SocketLike,
    options: ClientOptions = {},
  ) {
    this.url = url;
    this.makeSocket = makeSocket;
    this.sched = options.scheduler ?? realScheduler;
    this.targetIntervalMs = options.targetIntervalMs ?? 20;
    this.baseBackoffMs = options.baseBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
    this.backoffMs = this.baseBackoffMs;
  }

  connect(): void {
    this.stopped = false;
    this.openSocket("connecting");
  }

  close(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) this.sched.clearTimeout(this.reconnectTimer);
    if (this.flushTimer !== null) this.sched.clearTimeout(this.flushTimer);
    this.reconnectTimer = this.flushTimer = null;
    this.socket?.close();
    this.socket = null;
    this.setStatus("closed");
  }

  /** The render loop's accessor: marks the frame as consumed. */
  takeLatest(): StateMessage | null {
    this.consumed = true;
    return this.latest;
  }

  /**
   * Queue a target position. Sends immediately when outside the rate window,
   * otherwise keeps only the newest pending value and flushes it when the
   * window reopens — intermediate drags collapse instead of queueing.
   */
  sendTarget(pos: Vec3): void {
    this.pendingTarget = pos;
    this.flushTarget();
  }

  reset(condition: Condition, seed: number): void {
    this.sendNow({ type: "reset", condition, seed });
  }

  recordStart(): void {
    this.sendNow({ type: "record_start" });
  }

  recordStop(): void {
    this.sendNow({ type: "record_stop" });
  }

  saveDemo(group: DemoGroup): void {
    this.sendNow({ type: "save_demo", group });
  }

  private openSocket(status: ConnectionStatus): void {
    this.setStatus(status);
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = this.baseBackoffMs;
      this.setStatus("open");
    };
    socket.onmessage = (event) => this.handleFrame(event.data);
    socket.onerror = () => {
      /* onclose follows; the banner keys off status */
    };
    socket.onclose = () => {
      this.socket = null;
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer !== null) return;
    this.setStatus("reconnecting");
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
    this.reconnectTimer = this.sched.setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.stopped) this.openSocket("reconnecting");
    }, delay);
  }

  private handleFrame(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.onError?.("unparseable frame from service");
      return;
    }
    switch (msg.type) {
      case "state":
        if (!this.consumed) this.droppedFrames += 1;
        this.latest = msg;
        this.consumed = false;
        this.stateFrames += 1;
        break;
      case "error":
        this.onError?.(msg.detail);
        break;
      case "saved":
        this.onSaved?.(msg.path);
        break;
    }
  }

  private setStatus(status: ConnectionStatus): void {
    if (this.status === status) return;
    this.status = status;
    this.onStatus?.(status);
  }

  private sendNow(msg: ClientMessage): void {
    this.socket?.send(encodeClientMessage(msg));
  }

  private flushTarget(): void {
    if (this.pendingTarget === null || this.socket === null) return;
    const now = this.sched.now();
    const wait = this.lastTargetSentAt + this.targetIntervalMs - now;
    if (wait <= 0) {
      this.sendNow({ type: "set_target", pos: this.pendingTarget });
      this.lastTargetSentAt = now;
      this.pendingTarget = null;
      return;
    }
    if (this.flushTimer === null) {
      this.flushTimer = this.sched.setTimeout(() => {
        this.flushTimer = null;
        this.flushTarget();
      }, wait);
    }
  }
}
