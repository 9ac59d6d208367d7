/**
 * Panel wiring: WebSocket session with manual reconnect, keyboard intake,
 * debounced command transmission, and render loop.
 */

import { KeyTracker, KEY_HELP } from "./keyboard.js";
import {
  CommandFrame,
  parseServerFrame,
  SchemaError,
  TelemetryFrame,
} from "./protocol.js";
import { drawGauge, drawTorqueBars, drawTraces } from "./render.js";
import { TelemetryHistory } from "./state.js";
import { CommandSender } from "./sender.js";

type Status = "disconnected" | "connecting" | "connected";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class Panel {
  private socket: WebSocket | null = null;
  private status: Status = "disconnected";
  private readonly history = new TelemetryHistory();
  private readonly keys = new KeyTracker();
  private readonly sender = new CommandSender((frame) => this.transmit(frame));
  private lastError = "";

  private readonly endpointInput = el<HTMLInputElement>("endpoint");
  private readonly connectButton = el<HTMLButtonElement>("connect");
  private readonly statusLabel = el<HTMLSpanElement>("status");
  private readonly clampedLabel = el<HTMLSpanElement>("clamped");
  private readonly qpLabel = el<HTMLSpanElement>("qp-status");
  private readonly errorLabel = el<HTMLSpanElement>("last-error");
  private readonly traceCanvases: HTMLCanvasElement[] = [];

  constructor() {
    for (let c = 0; c < 6; c += 1) {
      this.traceCanvases.push(el<HTMLCanvasElement>(`trace-${c}`));
    }
    this.connectButton.addEventListener("click", () => this.toggleConnection());
    window.addEventListener("keydown", (e) => {
      if (document.activeElement === this.endpointInput) return;
      if (this.keys.keyDown(e.key)) e.preventDefault();
    });
    window.addEventListener("keyup", (e) => {
      if (this.keys.keyUp(e.key)) e.preventDefault();
    });
    window.addEventListener("blur", () => this.keys.releaseAll());
    this.renderKeyHelp();
    setInterval(() => this.pump(), 33); // >= 30 Hz command cadence
    const renderLoop = () => {
      this.render();
      requestAnimationFrame(renderLoop);
    };
    requestAnimationFrame(renderLoop);
  }

  private renderKeyHelp(): void {
    const help = el<HTMLUListElement>("key-help");
    help.innerHTML = "";
    for (const [keys, action] of KEY_HELP) {
      const li = document.createElement("li");
      li.innerHTML = `<kbd>${keys}</kbd> ${action}`;
      help.appendChild(li);
    }
  }

  private toggleConnection(): void {
    if (this.status !== "disconnected") {
      this.socket?.close();
      return;
    }
    const endpoint = this.endpointInput.value.trim() || "127.0.0.1:8765";
    this.setStatus("connecting");
    const socket = new WebSocket(`ws://${endpoint}`);
    this.socket = socket;
    socket.onopen = () => {
      this.setStatus("connected");
      this.sender.resetTimer();
      this.history.clear();
    };
    socket.onmessage = (event) => this.onFrame(String(event.data));
    socket.onclose = () => {
      this.socket = null;
      this.keys.releaseAll();
      this.setStatus("disconnected");
    };
    socket.onerror = () => {
      this.lastError = "socket error";
    };
  }

  private setStatus(status: Status): void {
    this.status = status;
    this.statusLabel.textContent = status;
    this.statusLabel.className = `status-${status}`;
    this.connectButton.textContent =
      status === "disconnected" ? "Connect" : "Disconnect";
  }

  private onFrame(text: string): void {
    let frame;
    try {
      frame = parseServerFrame(text);
    } catch (e) {
      this.lastError = e instanceof SchemaError ? e.message : String(e);
      return;
    }
    if (frame.type === "error") {
      this.lastError = frame.message;
      return;
    }
    this.history.push(frame);
  }

  private transmit(frame: CommandFrame): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(JSON.stringify(frame));
    }
  }

  private pump(): void {
    if (this.status !== "connected") return;
    this.sender.offer("bimanual", "twist", this.keys.twist());
  }

  private render(): void {
    this.errorLabel.textContent = this.lastError;
    const latest: TelemetryFrame | null = this.history.latest;
    for (let c = 0; c < 6; c += 1) {
      const canvas = this.traceCanvases[c]!;
      const ctx = canvas.getContext("2d");
      if (ctx) drawTraces(ctx, this.history, c, canvas.width, canvas.height);
    }
    if (!latest) {
      this.clampedLabel.textContent = "—";
      this.qpLabel.textContent = "—";
      return;
    }
    this.clampedLabel.textContent = latest.clamped ? "ADAPTING" : "tracking";
    this.clampedLabel.className = latest.clamped ? "badge-warn" : "badge-ok";
    this.qpLabel.textContent = latest.qp_status;

    const torqueCanvas = el<HTMLCanvasElement>("torque-bars");
    const tctx = torqueCanvas.getContext("2d");
    if (tctx) drawTorqueBars(tctx, latest, torqueCanvas.width, torqueCanvas.height);

    const frictionCanvas = el<HTMLCanvasElement>("gauge-friction");
    const fctx = frictionCanvas.getContext("2d");
    if (fctx) {
      drawGauge(
        fctx,
        { label: "friction margin", value: latest.friction_margin, fullScale: 5 },
        frictionCanvas.width,
        frictionCanvas.height,
      );
    }
    const copCanvas = el<HTMLCanvasElement>("gauge-cop");
    const cctx = copCanvas.getContext("2d");
    if (cctx) {
      drawGauge(
        cctx,
        { label: "CoP margin", value: latest.cop_margin, fullScale: 1 },
        copCanvas.width,
        copCanvas.height,
      );
    }
  }
}

new Panel();
