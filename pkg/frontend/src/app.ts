/**
 * DOM wiring for the rating study. One page at a time: bold question on
 * top, four neutrally-labeled videos with sliders below, and a submit
 * button that stays disabled until every video has been played and every
 * slider touched. The browser back button always lands on the current page.
 */

import { StudyClient } from "./protocol.js";
import { SessionController } from "./session.js";

const root = document.getElementById("app") as HTMLElement;
const client = new StudyClient(window.location.origin);
const controller = new SessionController(client);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(): void {
  root.replaceChildren();
  if (controller.phase === "completed") {
    renderCompletion();
    return;
  }
  if (controller.phase === "instructions") {
    renderInstructions();
    return;
  }
  renderRatingPage();
}

function renderInstructions(): void {
  const page = controller.pageState?.page;
  if (!page) return;
  const box = el("div", "instructions");
  box.appendChild(el("h1", undefined, "Rating instructions"));
  const muted = page.muted;
  box.appendChild(el(
    "p",
    undefined,
    muted
      ? "In this part the videos are silent. Rate how human-like the behaviors " +
        "of the virtual agent appear, using only what you see."
      : "In this part the videos include the speech audio. Rate how well the " +
        "agent's behavior matches the speech, in rhythm and intonation.",
  ));
  box.appendChild(el(
    "p",
    undefined,
    "On each page, watch all four videos (as many times as you like) and set " +
    "each slider. You cannot return to a page after submitting it.",
  ));
  const start = el("button", "primary", "Start");
  start.addEventListener("click", () => {
    controller.beginRating();
    render();
  });
  box.appendChild(start);
  root.appendChild(box);
}

function renderCompletion(): void {
  const box = el("div", "completion");
  box.appendChild(el("h1", undefined, "All done"));
  box.appendChild(el("p", undefined, "Thank you for participating. You can close this tab."));
  root.appendChild(box);
}

function renderRatingPage(): void {
  const state = controller.pageState;
  if (!state) return;
  const page = state.page;

  const header = el("div", "header");
  const question = el("h1", "question", page.question);  // bold via stylesheet
  header.appendChild(question);
  const { current, total } = controller.progress();
  header.appendChild(el("div", "progress", `Page ${current} of ${total}`));
  root.appendChild(header);

  const grid = el("div", "video-grid");
  page.videos.forEach((_, slot) => grid.appendChild(renderSlot(slot)));
  root.appendChild(grid);

  const footer = el("div", "footer");
  const error = el("div", "error", controller.lastError);
  footer.appendChild(error);
  const submit = el("button", "primary submit", "Submit ratings");
  submit.disabled = !controller.canSubmit();
  submit.addEventListener("click", () => {
    void (async () => {
      submit.disabled = true;
      const advanced = await controller.submit();
      if (advanced) {
        lockHistory();
      }
      render();
    })();
  });
  footer.appendChild(submit);
  const hints = el("ul", "blockers");
  for (const reason of state.blockers()) {
    hints.appendChild(el("li", undefined, reason));
  }
  footer.appendChild(hints);
  root.appendChild(footer);
}

function renderSlot(slot: number): HTMLElement {
  const state = controller.pageState!;
  const card = el("div", "video-card");
  card.appendChild(el("h2", undefined, state.displayLabel(slot)));

  const video = el("video", "player");
  video.src = state.videoUri(slot);
  video.controls = true;
  video.muted = state.muted;            // believability block is silent
  video.addEventListener("volumechange", () => {
    if (state.muted && !video.muted) video.muted = true;  // enforce, not advise
  });
  video.addEventListener("ended", () => {
    state.markPlayed(slot);
    render();
  });
  video.addEventListener("error", () => {
    state.markLoadError(slot);
    render();
  });
  card.appendChild(video);

  if (state.hasLoadError(slot)) {
    const retry = el("button", "retry", "Video failed to load - retry");
    retry.addEventListener("click", () => {
      video.load();
      state.markLoadError(slot);
      render();
    });
    card.appendChild(retry);
  }

  const row = el("div", "slider-row");
  const slider = el("input") as HTMLInputElement;
  slider.type = "range";
  slider.min = "0";
  slider.max = "100";
  slider.step = "1";
  slider.value = String(state.sliderValue(slot));
  const value = el("span", "slider-value", String(state.sliderValue(slot)));
  slider.addEventListener("input", () => {
    const clamped = state.setSlider(slot, Number(slider.value));
    value.textContent = String(clamped);   // live numeric readout
    refreshSubmit();
  });
  row.appendChild(slider);
  row.appendChild(value);
  card.appendChild(row);
  return card;
}

function refreshSubmit(): void {
  const submit = root.querySelector<HTMLButtonElement>("button.submit");
  if (submit) submit.disabled = !controller.canSubmit();
}

/** Pin history so "back" re-renders the current page instead of regressing. */
function lockHistory(): void {
  history.pushState({ page: controller.progress().current }, "");
}

window.addEventListener("popstate", () => {
  lockHistory();
  controller.back();
  render();
});

void (async () => {
  try {
    await controller.start();
    lockHistory();
    render();
  } catch (err) {
    root.replaceChildren(el("p", "error", `Could not start the study: ${String(err)}`));
  }
})();
