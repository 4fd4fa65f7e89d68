/** Typed client for the portal JSON API.
 *
 * Failures carry the server's stable machine-readable error code; the UI
 * localizes codes instead of parsing messages.
 */

import type {
  AdminUser,
  AssertionWire,
  AttestationWire,
  CreationOptionsWire,
  PortalContext,
  RegisteredCredential,
  RegistrationTokenDoc,
  RequestOptionsWire,
  RoleChangeResult,
  VerifyResult,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function toApiError(response: Response): Promise<ApiError> {
  let code = "http_" + response.status;
  let message = response.statusText;
  try {
    const body = (await response.json()) as { error?: string; message?: string };
    if (body && typeof body.error === "string") {
      code = body.error;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status-based code
  }
  return new ApiError(code, message, response.status);
}

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike,
    private readonly baseUrl = "",
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      credentials: "same-origin",
      ...init,
    });
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  portalContext(fas: string): Promise<PortalContext> {
    return this.request<PortalContext>(
      "/api/portal/context?fas=" + encodeURIComponent(fas),
    );
  }

  authOptions(username: string | null, fas: string): Promise<RequestOptionsWire> {
    return this.post<RequestOptionsWire>("/api/auth/options", { username, fas });
  }

  authVerify(assertion: AssertionWire): Promise<VerifyResult> {
    return this.post<VerifyResult>("/api/auth/verify", { assertion });
  }

  logout(): Promise<{ ok: boolean }> {
    return this.post<{ ok: boolean }>("/api/logout", {});
  }

  registerOptions(
    username: string,
    label = "",
    token?: string,
  ): Promise<CreationOptionsWire> {
    return this.post<CreationOptionsWire>("/api/admin/register/options", {
      username,
      label,
      token: token ?? null,
    });
  }

  registerVerify(
    attestation: AttestationWire,
    label = "",
    token?: string,
  ): Promise<RegisteredCredential> {
    return this.post<RegisteredCredential>("/api/admin/register/verify", {
      attestation,
      label,
      token: token ?? null,
    });
  }

  listUsers(): Promise<AdminUser[]> {
    return this.request<AdminUser[]>("/api/admin/users");
  }

  setAdminRole(username: string, isAdmin: boolean): Promise<RoleChangeResult> {
    return this.post<RoleChangeResult>(
      `/api/admin/users/${encodeURIComponent(username)}/admin`,
      { is_admin: isAdmin },
    );
  }

  createRegistrationToken(
    ttlSeconds = 600,
    maxUses = 1,
  ): Promise<RegistrationTokenDoc> {
    return this.post<RegistrationTokenDoc>("/api/admin/regtoken", {
      ttl_seconds: ttlSeconds,
      max_uses: maxUses,
    });
  }
}
