import type { Filter, ReadingDoc } from "./types.js";

/** Structural subset of WebSocket that both browsers and the ws package satisfy. */
export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WsFactory = (url: string) => WsLike;

export type DataHandler = (docs: Record<string, unknown>[]) => void;

interface SubscriptionEntry {
  filters: Filter[];
  onData: DataHandler;
  confirmed: boolean;
}

/**
 * Live-push client: one shared connection, client-chosen request tokens.
 *
 * Keeps the token registry across connection drops: on reconnect every
 * active subscription is re-issued and gap listeners fire so views can
 * mark the blind spot in their data.
 */
export class RtClient {
  private subs = new Map<string, SubscriptionEntry>();
  private ws: WsLike | null = null;
  private connected = false;
  private closedByUs = false;
  private retries = 0;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private gapListeners = new Set<(atMs: number) => void>();

  constructor(
    private url: string,
    private wsFactory: WsFactory = (u) => new WebSocket(u) as unknown as WsLike,
  ) {}

  connect(): void {
    this.closedByUs = false;
    this.open();
  }

  private open(): void {
    let ws: WsLike;
    try {
      ws = this.wsFactory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.retries = 0;
    };
    ws.onmessage = (ev) => this.dispatch(String(ev.data));
    ws.onerror = () => {};
    ws.onclose = () => {
      const hadSession = this.connected;
      this.connected = false;
      this.ws = null;
      if (this.closedByUs) return;
      if (hadSession) {
        const now = Date.now();
        this.gapListeners.forEach((fn) => fn(now));
      }
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.closedByUs || this.reconnectTimer) return;
    const delay = Math.min(10_000, 500 * 2 ** this.retries);
    this.retries += 1;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.open();
    }, delay);
  }

  private dispatch(raw: string): void {
    let frame: Record<string, unknown>;
    try {
      frame = JSON.parse(raw);
    } catch {
      return;
    }
    switch (frame.msg_type) {
      case "rt_connect_ok":
        this.connected = true;
        for (const [token, entry] of this.subs) {
          entry.confirmed = false;
          this.sendSubscribe(token, entry.filters);
        }
        break;
      case "rt_ping":
        this.ws?.send(JSON.stringify({ msg_type: "rt_pong" }));
        break;
      case "rt_subscribe_ok": {
        const entry = this.subs.get(String(frame.request_id));
        if (entry) entry.confirmed = true;
        break;
      }
      case "rt_data": {
        const entry = this.subs.get(String(frame.request_id));
        if (entry) entry.onData((frame.request_data as Record<string, unknown>[]) ?? []);
        break;
      }
      case "rt_error":
        console.warn("rtmonitor error:", frame);
        break;
    }
  }

  private sendSubscribe(token: string, filters: Filter[]): void {
    this.ws?.send(JSON.stringify({ msg_type: "rt_subscribe", request_id: token, filters }));
  }

  subscribe(token: string, filters: Filter[], onData: DataHandler): void {
    this.subs.set(token, { filters, onData, confirmed: false });
    if (this.connected) this.sendSubscribe(token, filters);
  }

  unsubscribe(token: string): void {
    if (!this.subs.delete(token)) return;
    if (this.connected) {
      this.ws?.send(JSON.stringify({ msg_type: "rt_unsubscribe", request_id: token }));
    }
  }

  /** Active tokens, used by views to prove subscription hygiene. */
  tokens(): string[] {
    return [...this.subs.keys()].sort();
  }

  onGap(listener: (atMs: number) => void): () => void {
    this.gapListeners.add(listener);
    return () => this.gapListeners.delete(listener);
  }

  close(): void {
    this.closedByUs = true;
    if (this.reconnectTimer) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.ws?.close();
    this.ws = null;
    this.connected = false;
  }

  isConnected(): boolean {
    return this.connected;
  }

  /** Convenience for the common per-sensor live feed. */
  subscribeSensor(token: string, acpId: string, onReading: (doc: ReadingDoc) => void): void {
    this.subscribe(token, [{ field: "acp_id", op: "==", value: acpId }], (docs) => {
      for (const doc of docs) {
        if (doc && typeof doc === "object" && "features" in doc) {
          onReading(doc as unknown as ReadingDoc);
        }
      }
    });
  }
}
