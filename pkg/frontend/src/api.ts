/** Thin typed client for the acquisition service. */

import type {
  AcquisitionSnapshot,
  ClassificationResult,
  ModelInfo,
  ScenarioInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: unknown,
  ) {
    super(`service returned ${status}: ${JSON.stringify(payload)}`);
  }
}

export interface StartRequest {
  scenario: string;
  pack?: string;
  label?: string;
  seed?: number;
  time_scale?: number;
  model_id?: string;
  device_id?: string;
}

export interface StartResponse {
  acquisition_id: string;
  record_id: string;
  scenario: string;
  state: string;
}

export class ServiceApi {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await response.json();
    if (!response.ok) throw new ApiError(response.status, payload);
    return payload as T;
  }

  async scenarios(): Promise<ScenarioInfo[]> {
    const body = await this.request<{ scenarios: ScenarioInfo[] }>("GET", "/v1/scenarios");
    return body.scenarios;
  }

  async readyModels(): Promise<ModelInfo[]> {
    const body = await this.request<{ models: ModelInfo[] }>("GET", "/v1/models");
    return body.models.filter((m) => m.status === "ready");
  }

  startAcquisition(req: StartRequest): Promise<StartResponse> {
    return this.request("POST", "/v1/acquisitions", req);
  }

  acquisition(id: string): Promise<AcquisitionSnapshot> {
    return this.request("GET", `/v1/acquisitions/${encodeURIComponent(id)}`);
  }

  stopAcquisition(id: string): Promise<{ state: string }> {
    return this.request("DELETE", `/v1/acquisitions/${encodeURIComponent(id)}`);
  }

  infer(modelId: string, recordId: string): Promise<ClassificationResult> {
    return this.request("POST", `/v1/models/${encodeURIComponent(modelId)}:infer`, {
      record_id: recordId,
    });
  }
}
