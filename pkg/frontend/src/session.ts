/**
 * Client-side session logic, independent of the DOM.
 *
 * PageState tracks the four sliders and the play/touch gating for one page;
 * SessionController owns the forward-only page flow. Submitted pages are
 * dropped entirely, so nothing in the client can navigate back to them, and
 * a failed submission keeps the page state intact for a retry.
 */

import {
  PagePayload,
  RatingSubmission,
  ServiceError,
  StudyClient,
} from "./protocol.js";

export const SLIDER_INITIAL = 50;
export const SCALE_MIN = 0;
export const SCALE_MAX = 100;

interface SlotState {
  value: number;
  touched: boolean;
  played: boolean;
  loadError: boolean;
}

export class PageState {
  private readonly slots: SlotState[];

  constructor(readonly page: PagePayload) {
    if (page.videos.length !== 4) {
      throw new Error(`expected 4 videos per page, got ${page.videos.length}`);
    }
    this.slots = page.videos.map(() => ({
      value: SLIDER_INITIAL,
      touched: false,
      played: false,
      loadError: false,
    }));
  }

  /** Neutral label for a slot; condition names are never shown. */
  displayLabel(slot: number): string {
    return this.page.videos[slot].label;
  }

  videoUri(slot: number): string {
    return this.page.videos[slot].uri;
  }

  /** Believability pages play without audio. */
  get muted(): boolean {
    return this.page.muted;
  }

  sliderValue(slot: number): number {
    return this.slots[slot].value;
  }

  setSlider(slot: number, value: number): number {
    const clamped = Math.min(SCALE_MAX, Math.max(SCALE_MIN, Math.round(value)));
    this.slots[slot].value = clamped;
    this.slots[slot].touched = true;
    return clamped;
  }

  markPlayed(slot: number): void {
    this.slots[slot].played = true;
    this.slots[slot].loadError = false;
  }

  markLoadError(slot: number): void {
    this.slots[slot].loadError = true;
  }

  hasLoadError(slot: number): boolean {
    return this.slots[slot].loadError;
  }

  /** Submit unlocks only once every video played and every slider moved. */
  canSubmit(): boolean {
    return this.slots.every((s) => s.played && s.touched && !s.loadError);
  }

  blockers(): string[] {
    const reasons: string[] = [];
    this.slots.forEach((slot, i) => {
      const label = this.displayLabel(i);
      if (slot.loadError) reasons.push(`${label} failed to load - retry it`);
      else if (!slot.played) reasons.push(`play ${label} at least once`);
      if (!slot.touched) reasons.push(`set the slider for ${label}`);
    });
    return reasons;
  }

  ratings(): RatingSubmission[] {
    return this.page.videos.map((video, i) => ({
      condition: video.condition,
      score: this.slots[i].value,
    }));
  }
}

export type Phase = "instructions" | "rating" | "completed";

export class SessionController {
  participantId = "";
  totalPages = 0;
  pageState: PageState | null = null;
  phase: Phase = "instructions";
  lastError = "";
  private submitting = false;
  private lastCriterion = "";

  constructor(private readonly client: StudyClient) {}

  async start(participantId?: string): Promise<void> {
    const created = await this.client.createSession(participantId);
    this.participantId = created.participant_id;
    this.totalPages = created.total_pages;
    this.acceptPage(created.page);
    this.phase = "instructions"; // criterion intro before the first page
  }

  private acceptPage(page: PagePayload | null | undefined): void {
    if (!page) {
      this.pageState = null;
      this.phase = "completed";
      return;
    }
    const newBlock = page.criterion !== this.lastCriterion;
    this.lastCriterion = page.criterion;
    this.pageState = new PageState(page);
    this.phase = newBlock ? "instructions" : "rating";
  }

  beginRating(): void {
    if (this.phase === "instructions" && this.pageState) {
      this.phase = "rating";
    }
  }

  /** 1-based progress over rating pages. */
  progress(): { current: number; total: number } {
    const current = this.pageState
      ? this.pageState.page.page_index + 1
      : this.totalPages;
    return { current, total: this.totalPages };
  }

  canSubmit(): boolean {
    return (
      this.phase === "rating" &&
      !this.submitting &&
      this.pageState !== null &&
      this.pageState.canSubmit()
    );
  }

  /**
   * Post the page's ratings. On success the old page is unrecoverable; on a
   * retryable failure the slider/play state is preserved and the caller may
   * submit again.
   */
  async submit(): Promise<boolean> {
    if (!this.pageState || !this.canSubmit()) {
      return false;
    }
    this.submitting = true;
    this.lastError = "";
    try {
      const result = await this.client.submitRatings(
        this.participantId,
        this.pageState.page.page_index,
        this.pageState.ratings(),
      );
      this.acceptPage(result.page);
      return true;
    } catch (err) {
      if (err instanceof ServiceError) {
        this.lastError = err.retryable
          ? `submission failed (${err.message}) - your ratings are kept, try again`
          : err.message;
      } else {
        this.lastError = String(err);
      }
      return false;
    } finally {
      this.submitting = false;
    }
  }

  /** Back navigation is a no-op: the current page is all there is. */
  back(): Phase {
    return this.phase;
  }
}
