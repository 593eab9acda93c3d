/**
 * Payload types and the HTTP client for the rating-study service.
 *
 * The client is transport-injectable so tests can simulate timeouts and
 * rejections without a network.
 */

export interface VideoSlot {
  slot: number;
  label: string;       // neutral on-screen label ("Video A"... )
  condition: string;   // internal key for submission, never rendered
  uri: string;
}

export interface PagePayload {
  participant_id: string;
  page_index: number;
  total_pages: number;
  criterion: string;
  question: string;
  muted: boolean;
  sequence_id: string;
  scale: [number, number];
  videos: VideoSlot[];
}

export interface SessionCreated {
  participant_id: string;
  total_pages: number;
  page: PagePayload;
}

export interface SubmitResult {
  accepted: boolean;
  completed?: boolean;
  page?: PagePayload | null;
  reason?: string;
}

export interface RatingSubmission {
  condition: string;
  score: number;
}

export type Transport = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(message: string, readonly status: number, readonly retryable: boolean) {
    super(message);
  }
}

export class StudyClient {
  constructor(
    private readonly baseUrl: string,
    private readonly transport: Transport = fetch,
    private readonly timeoutMs = 10_000,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const controller = new AbortController();
    const timer = setTimeout(() => controller.abort(), this.timeoutMs);
    let response: Response;
    try {
      response = await this.transport(`${this.baseUrl}${path}`, {
        ...init,
        signal: controller.signal,
      });
    } catch (err) {
      // network failure or timeout: the caller may retry with state intact
      throw new ServiceError(`service unreachable: ${String(err)}`, 0, true);
    } finally {
      clearTimeout(timer);
    }
    const body = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      const reason = (body.reason ?? body.error ?? response.statusText) as string;
      throw new ServiceError(reason, response.status, response.status >= 500);
    }
    return body as T;
  }

  createSession(participantId?: string): Promise<SessionCreated> {
    return this.request<SessionCreated>("/api/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(participantId ? { participant_id: participantId } : {}),
    });
  }

  fetchPage(participantId: string): Promise<{ completed: boolean; page: PagePayload | null }> {
    return this.request(`/api/sessions/${participantId}/page`);
  }

  submitRatings(
    participantId: string,
    pageIndex: number,
    ratings: RatingSubmission[],
  ): Promise<SubmitResult> {
    return this.request<SubmitResult>(`/api/sessions/${participantId}/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ page_index: pageIndex, ratings }),
    });
  }
}
