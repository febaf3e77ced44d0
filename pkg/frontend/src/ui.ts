import { AnnotateFlow, ANSWER_FOR_KEY } from "./flow.js";
import type { FlowClient, FlowView } from "./flow.js";
import type { HumanAnswer, PairPayload, Progress, SessionInfo } from "./types.js";

export function formatProbability(p: number): string {
  if (!Number.isFinite(p)) return "";
  const pct = Math.min(1, Math.max(0, p)) * 100;
  return pct >= 10 ? `${pct.toFixed(0)}%` : `${pct.toFixed(1)}%`;
}

export function panelCaption(panel: { id: string; image_uri: string | null }): string {
  return panel.image_uri === null ? `${panel.id} (no image)` : panel.id;
}

export function progressSummary(p: Progress): string {
  return (
    `cycle ${p.cycle + 1}/${p.num_cycles}` +
    ` | batch ${p.batch_used}/${p.batch_budget}` +
    ` | total ${p.budget_used}/${p.budget_allotted}` +
    ` | answered ${p.answered}, skipped ${p.skipped}`
  );
}

export type UiHandle = {
  flow: AnnotateFlow;
  destroy(): void;
};

type Refs = {
  session: HTMLElement;
  bar: HTMLElement;
  summary: HTMLElement;
  notice: HTMLElement;
  card: HTMLElement;
  panelA: HTMLElement;
  panelB: HTMLElement;
  badge: HTMLButtonElement;
  status: HTMLElement;
  answers: HTMLButtonElement[];
  advance: HTMLButtonElement;
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

function buildDom(root: HTMLElement): Refs {
  root.textContent = "";

  const header = el("header", "header");
  const title = el("h1", "title", "Annotation");
  const session = el("span", "session");
  header.append(title, session);

  const progress = el("div", "progress");
  const track = el("div", "track");
  const bar = el("div", "bar");
  track.appendChild(bar);
  const summary = el("div", "summary");
  progress.append(track, summary);

  const notice = el("div", "notice hidden");

  const card = el("div", "card");
  const panelA = el("div", "panel");
  const badge = el("button", "badge");
  badge.type = "button";
  badge.title = "sampling probability (click to hide)";
  const panelB = el("div", "panel");
  card.append(panelA, badge, panelB);

  const status = el("div", "status hidden");

  const actions = el("div", "actions");
  const answers: HTMLButtonElement[] = [];
  const specs: Array<[HumanAnswer, string, string]> = [
    ["same", "Same individual", "S"],
    ["different", "Different individual", "D"],
    ["skip", "Skip", "K"],
  ];
  for (const [answer, label, key] of specs) {
    const button = el("button", `answer answer-${answer}`);
    button.type = "button";
    button.dataset.answer = answer;
    button.append(el("span", "label", label), el("kbd", "kbd", key));
    answers.push(button);
    actions.appendChild(button);
  }
  const advance = el("button", "advance hidden", "Advance cycle");
  advance.type = "button";
  actions.appendChild(advance);

  root.append(header, progress, notice, card, status, actions);
  return { session, bar, summary, notice, card, panelA, panelB, badge, status, answers, advance };
}

function renderPanel(target: HTMLElement, panel: PairPayload["a"]): void {
  target.textContent = "";
  if (panel.image_uri !== null) {
    const img = document.createElement("img");
    img.src = panel.image_uri;
    img.alt = panel.id;
    target.appendChild(img);
  } else {
    target.appendChild(el("div", "placeholder", panel.id));
  }
  target.appendChild(el("div", "caption", panelCaption(panel)));
}

/** Mount the annotation interface under root and start the flow. */
export async function initAnnotationUi(root: HTMLElement, client: FlowClient): Promise<UiHandle> {
  const refs = buildDom(root);
  const flow = new AnnotateFlow(client);
  let busy = false;
  let hasPair = false;

  const renderProgress = (p: Progress | null) => {
    if (p === null) return;
    refs.summary.textContent = progressSummary(p);
    const frac = p.batch_budget > 0 ? p.batch_used / p.batch_budget : 0;
    refs.bar.style.width = `${Math.round(100 * Math.min(1, frac))}%`;
  };

  const render = (view: FlowView) => {
    refs.notice.classList.toggle("hidden", flow.notice === null);
    refs.notice.textContent = flow.notice ?? "";
    renderProgress(flow.progress);
    hasPair = view.kind === "pair";
    refs.card.classList.toggle("hidden", !hasPair);
    refs.advance.classList.toggle("hidden", view.kind !== "batch-complete");
    for (const button of refs.answers) button.disabled = !hasPair;
    if (view.kind === "pair") {
      refs.status.classList.add("hidden");
      renderPanel(refs.panelA, view.pair.a);
      renderPanel(refs.panelB, view.pair.b);
      refs.badge.textContent = formatProbability(view.pair.probability);
    } else if (view.kind === "batch-complete") {
      refs.status.classList.remove("hidden");
      refs.status.textContent = "Batch complete. Advance to refine and start the next cycle.";
    } else {
      refs.status.classList.remove("hidden");
      refs.status.textContent = "All cycles are done. The run directory holds the results.";
    }
  };

  // one action at a time: buttons stay disabled while a submission is in flight
  const act = async (step: () => Promise<FlowView>) => {
    if (busy) return;
    busy = true;
    for (const button of refs.answers) button.disabled = true;
    refs.advance.disabled = true;
    try {
      render(await step());
    } finally {
      busy = false;
      refs.advance.disabled = false;
      for (const button of refs.answers) button.disabled = !hasPair;
    }
  };

  for (const button of refs.answers) {
    button.addEventListener("click", () => {
      void act(() => flow.submit(button.dataset.answer as HumanAnswer));
    });
  }
  refs.advance.addEventListener("click", () => void act(() => flow.advanceCycle()));
  refs.badge.addEventListener("click", () => refs.badge.classList.toggle("collapsed"));

  const onKey = (event: KeyboardEvent) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    const answer = ANSWER_FOR_KEY[event.key.toLowerCase()];
    if (answer === undefined || !hasPair) return;
    void act(() => flow.submit(answer));
  };
  document.addEventListener("keydown", onKey);

  let info: SessionInfo | null = null;
  if ("session" in client && typeof (client as { session: unknown }).session === "function") {
    info = await (client as { session(): Promise<SessionInfo> }).session();
    refs.session.textContent = `${info.session_id} | ${info.num_samples} samples`;
    renderProgress(info);
  }
  render(await flow.refresh());

  return {
    flow,
    destroy() {
      document.removeEventListener("keydown", onKey);
      root.textContent = "";
    },
  };
}
