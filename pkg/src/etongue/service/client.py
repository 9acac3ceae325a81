"""Typed convenience client for the service API (used by the CLI)."""

from __future__ import annotations

import time
from typing import Any

import httpx


class ServiceError(RuntimeError):
    """Non-success response from the service."""

    def __init__(self, status_code: int, payload: Any):
        self.status_code = status_code
        self.payload = payload
        message = payload.get("message", payload) if isinstance(payload, dict) else payload
        super().__init__(f"HTTP {status_code}: {message}")


class ServiceUnreachable(RuntimeError):
    pass


class ServiceClient:
    def __init__(self, endpoint: str, client: httpx.Client | None = None, timeout: float = 30.0):
        self.base = endpoint.rstrip("/")
        self._http = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> Any:
        try:
            response = self._http.request(method, self.base + path, **kwargs)
        except httpx.HTTPError as exc:
            raise ServiceUnreachable(f"cannot reach service at {self.base}: {exc}") from exc
        if response.status_code >= 400:
            try:
                payload = response.json()
            except ValueError:
                payload = response.text
            raise ServiceError(response.status_code, payload)
        return response.json()

    def upload_measurement(self, document: dict[str, Any]) -> dict[str, Any]:
        return self._request("POST", "/v1/measurements", json=document)

    def list_measurements(self, **params: Any) -> dict[str, Any]:
        clean = {k: v for k, v in params.items() if v is not None}
        return self._request("GET", "/v1/measurements", params=clean)

    def get_measurement(self, record_id: str) -> dict[str, Any]:
        return self._request("GET", f"/v1/measurements/{record_id}")

    def train(self, body: dict[str, Any]) -> dict[str, Any]:
        return self._request("POST", "/v1/models:train", json=body)

    def get_model(self, model_id: str) -> dict[str, Any]:
        return self._request("GET", f"/v1/models/{model_id}")

    def list_models(self) -> dict[str, Any]:
        return self._request("GET", "/v1/models")

    def wait_for_model(self, model_id: str, timeout_s: float = 300.0,
                       poll_s: float = 0.25) -> dict[str, Any]:
        deadline = time.monotonic() + timeout_s
        while True:
            body = self.get_model(model_id)
            if body["status"] != "training":
                return body
            if time.monotonic() >= deadline:
                raise TimeoutError(f"model {model_id} still training after {timeout_s}s")
            time.sleep(poll_s)

    def infer(self, model_id: str, *, record_id: str | None = None,
              record: dict[str, Any] | None = None) -> dict[str, Any]:
        body: dict[str, Any] = {}
        if record_id is not None:
            body["record_id"] = record_id
        if record is not None:
            body["record"] = record
        return self._request("POST", f"/v1/models/{model_id}:infer", json=body)

    def scenarios(self) -> dict[str, Any]:
        return self._request("GET", "/v1/scenarios")
