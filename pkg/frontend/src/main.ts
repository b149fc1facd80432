/** Controller: owns the state, talks to the service, repaints on change. */

import { ApiError, Client } from "./api.js";
import type { AppState } from "./state.js";
import { appendTurn, atCap, fromTranscript, initialState, newSession } from "./state.js";
import { render } from "./render.js";

export const SAMPLE_TITLE = "Verghese Kurien";
export const SAMPLE_PASSAGE =
  "Verghese Kurien was an Indian social entrepreneur. He was born on " +
  "26 November, 1921 at Calicut, Madras Presidency (now Kozhikode, Kerala) " +
  "in a Syrian Christian family. His family later moved north.";

/** API base comes from ?api=, so the static bundle can point anywhere. */
export function apiBaseFromLocation(loc: Pick<Location, "search">): string {
  return new URLSearchParams(loc.search).get("api") ?? "";
}

export function sessionIdFromHash(hash: string): string | null {
  const match = /^#s=(.+)$/.exec(hash);
  return match === null ? null : decodeURIComponent(match[1] as string);
}

export class App {
  state: AppState = initialState();
  private inFlight: Promise<void> = Promise.resolve();
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly client: Client,
  ) {
    this.paint();
  }

  /** Resolves once every action started so far has finished. */
  async settle(): Promise<void> {
    let last;
    do {
      last = this.inFlight;
      await last;
    } while (last !== this.inFlight);
  }

  private track(action: Promise<void>): Promise<void> {
    this.inFlight = this.inFlight.then(() => action);
    return action;
  }

  start(passage: string, title: string): Promise<void> {
    return this.track(this.doStart(passage, title));
  }

  private async doStart(passage: string, title: string): Promise<void> {
    if (this.state.pending || passage.trim() === "") {
      return;
    }
    this.state.pending = true;
    this.state.error = null;
    this.paint();
    try {
      const created = await this.client.createSession(passage, title);
      this.state.session = newSession(created.session_id, passage, title);
      this.state.capped = false;
      if (typeof window !== "undefined") {
        window.location.hash = `#s=${encodeURIComponent(created.session_id)}`;
      }
    } catch (err) {
      this.state.error = describeError(err);
      this.retryAction = () => this.doStart(passage, title);
    } finally {
      this.state.pending = false;
      this.paint();
    }
  }

  ask(question: string): Promise<void> {
    return this.track(this.doAsk(question));
  }

  private async doAsk(question: string): Promise<void> {
    const session = this.state.session;
    // one ask in flight at a time; the input is disabled while pending
    if (session === null || this.state.pending || this.state.capped || question.trim() === "") {
      return;
    }
    this.state.pending = true;
    this.state.error = null;
    this.paint();
    try {
      const turn = await this.client.ask(session.sessionId, question);
      this.state.session = appendTurn(session, turn);
      this.state.capped = atCap(this.state.session);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state.capped = true;
      } else {
        this.state.error = describeError(err);
        this.retryAction = () => this.doAsk(question);
      }
    } finally {
      this.state.pending = false;
      this.paint();
    }
  }

  /** Rebuild the view from the server transcript (page reload path). */
  resume(sessionId: string): Promise<void> {
    return this.track(this.doResume(sessionId));
  }

  private async doResume(sessionId: string): Promise<void> {
    this.state.pending = true;
    this.paint();
    try {
      const view = await this.client.getSession(sessionId);
      this.state.session = fromTranscript(view);
      this.state.capped = atCap(this.state.session);
      this.state.error = null;
    } catch (err) {
      this.state.error = describeError(err);
      this.retryAction = () => this.doResume(sessionId);
    } finally {
      this.state.pending = false;
      this.paint();
    }
  }

  end(): Promise<void> {
    return this.track(this.doEnd());
  }

  private async doEnd(): Promise<void> {
    const session = this.state.session;
    if (session === null) {
      return;
    }
    try {
      await this.client.deleteSession(session.sessionId);
    } catch {
      // dropping a dead session is fine either way
    }
    this.state = initialState();
    if (typeof window !== "undefined") {
      window.location.hash = "";
    }
    this.paint();
  }

  private retry(): Promise<void> {
    const action = this.retryAction;
    this.state.error = null;
    this.retryAction = null;
    if (action === null) {
      this.paint();
      return Promise.resolve();
    }
    return this.track(action());
  }

  private paint(): void {
    render(this.state, this.root);
    this.wire();
  }

  private wire(): void {
    const passageInput = this.find<HTMLTextAreaElement>("#passage-input");
    const startBtn = this.find<HTMLButtonElement>("#start-btn");
    if (passageInput !== null && startBtn !== null) {
      const sync = () => {
        startBtn.disabled = passageInput.value.trim() === "" || this.state.pending;
      };
      sync();
      passageInput.addEventListener("input", sync);
      startBtn.addEventListener("click", () => {
        const title = this.find<HTMLInputElement>("#title-input")?.value ?? "";
        void this.start(passageInput.value, title.trim());
      });
    }
    this.find<HTMLButtonElement>("#sample-btn")?.addEventListener("click", () => {
      if (passageInput !== null) {
        passageInput.value = SAMPLE_PASSAGE;
        passageInput.dispatchEvent(new Event("input"));
      }
      const title = this.find<HTMLInputElement>("#title-input");
      if (title !== null && title.value === "") {
        title.value = SAMPLE_TITLE;
      }
    });
    this.find<HTMLFormElement>("#ask-form")?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = this.find<HTMLInputElement>("#question-input");
      if (input !== null) {
        const question = input.value;
        input.value = "";
        void this.ask(question);
      }
    });
    this.find<HTMLButtonElement>("#retry-btn")?.addEventListener("click", () => {
      void this.retry();
    });
    this.find<HTMLButtonElement>("#end-btn")?.addEventListener("click", () => {
      void this.end();
    });
  }

  private find<T extends Element>(selector: string): T | null {
    return this.root.querySelector<T>(selector);
  }
}

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) {
    return;
  }
  const client = new Client(apiBaseFromLocation(window.location));
  const app = new App(root, client);
  const sessionId = sessionIdFromHash(window.location.hash);
  if (sessionId !== null) {
    void app.resume(sessionId);
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `Service error ${err.status}: ${err.message}`;
  }
  return "Cannot reach the service. Check that it is running and the API base URL is right.";
}

if (typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", boot);
  } else {
    boot();
  }
}
