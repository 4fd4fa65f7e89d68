/** Registrar/admin panel controller: live user/session table, key
 * registration, role toggles and registration-token issuance with QR.
 *
 * The session table refreshes by polling (default every 2 s, matching the
 * gateway's poll cadence); polling pauses while a registration ceremony is
 * in flight so the credential prompt is never interrupted.
 */

import { ApiError, type ApiClient } from "./api.js";
import {
  attestationToWire,
  classifyCeremonyError,
  toCreateOptions,
  type CredentialApi,
} from "./webauthn.js";
import type { AdminUser, RegistrationTokenDoc } from "./types.js";

export const DEFAULT_REFRESH_MS = 2000;

export interface Scheduler {
  set(callback: () => void, intervalMs: number): unknown;
  clear(handle: unknown): void;
}

const intervalScheduler: Scheduler = {
  set: (callback, intervalMs) => setInterval(callback, intervalMs),
  clear: (handle) => clearInterval(handle as Parameters<typeof clearInterval>[0]),
};

export interface AdminState {
  users: AdminUser[];
  errorCode: string | null;
  /** Set when the server refused the session: the page must go to login. */
  needsLogin: boolean;
  ceremonyPending: boolean;
  lastRegistered: string | null;
  token: RegistrationTokenDoc | null;
  tokenQrDataUrl: string | null;
}

export interface AdminDeps {
  api: Pick<
    ApiClient,
    "listUsers" | "registerOptions" | "registerVerify" | "setAdminRole" | "createRegistrationToken"
  >;
  credentials: CredentialApi | null;
  origin?: string;
  qrRenderer?: (payload: string) => Promise<string>;
  scheduler?: Scheduler;
  onChange?: (state: AdminState) => void;
}

export class AdminPanelController {
  state: AdminState = {
    users: [],
    errorCode: null,
    needsLogin: false,
    ceremonyPending: false,
    lastRegistered: null,
    token: null,
    tokenQrDataUrl: null,
  };
  private pollHandle: unknown = null;
  private readonly scheduler: Scheduler;

  constructor(private readonly deps: AdminDeps) {
    this.scheduler = deps.scheduler ?? intervalScheduler;
  }

  private update(patch: Partial<AdminState>): void {
    this.state = { ...this.state, ...patch };
    this.deps.onChange?.(this.state);
  }

  async refresh(): Promise<void> {
    if (this.state.ceremonyPending) {
      return; // never poll over a live credential prompt
    }
    try {
      const users = await this.deps.api.listUsers();
      this.update({ users, errorCode: null, needsLogin: false });
    } catch (error) {
      if (error instanceof ApiError && (error.status === 401 || error.status === 403)) {
        this.stopPolling();
        this.update({ needsLogin: true, errorCode: error.code });
        return;
      }
      this.update({ errorCode: error instanceof ApiError ? error.code : "network_error" });
    }
  }

  startPolling(intervalMs: number = DEFAULT_REFRESH_MS): void {
    this.stopPolling();
    this.pollHandle = this.scheduler.set(() => {
      void this.refresh();
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.pollHandle !== null) {
      this.scheduler.clear(this.pollHandle);
      this.pollHandle = null;
    }
  }

  /** Register a key for `username` (admin path or token self-registration). */
  async registerKey(username: string, label = "", token?: string): Promise<boolean> {
    if (this.deps.credentials === null) {
      this.update({ errorCode: "webauthn_unavailable" });
      return false;
    }
    this.update({ ceremonyPending: true, errorCode: null });
    try {
      const options = await this.deps.api.registerOptions(username, label, token);
      const credential = await this.deps.credentials.create(toCreateOptions(options));
      const summary = await this.deps.api.registerVerify(
        attestationToWire(credential), label, token,
      );
      this.update({ ceremonyPending: false, lastRegistered: summary.username });
      await this.refresh();
      return true;
    } catch (error) {
      const code =
        error instanceof ApiError
          ? error.code
          : classifyCeremonyError(error) === "fatal"
            ? "ceremony_unsupported"
            : "ceremony_interrupted";
      this.update({ ceremonyPending: false, errorCode: code });
      return false;
    }
  }

  async toggleAdmin(username: string, isAdmin: boolean): Promise<void> {
    try {
      await this.deps.api.setAdminRole(username, isAdmin);
      await this.refresh();
    } catch (error) {
      this.update({ errorCode: error instanceof ApiError ? error.code : "network_error" });
    }
  }

  /** Issue a self-registration token and render its QR payload. */
  async issueToken(ttlSeconds = 600, maxUses = 1): Promise<RegistrationTokenDoc | null> {
    try {
      const token = await this.deps.api.createRegistrationToken(ttlSeconds, maxUses);
      let qr: string | null = null;
      if (this.deps.qrRenderer) {
        qr = await this.deps.qrRenderer(token.qr_payload);
      }
      this.update({ token, tokenQrDataUrl: qr, errorCode: null });
      return token;
    } catch (error) {
      this.update({ errorCode: error instanceof ApiError ? error.code : "network_error" });
      return null;
    }
  }
}

/** Token-gated self-registration (the scanned-QR flow on the user's own
 * device): one call, no panel state. */
export async function registerWithToken(
  deps: Pick<AdminDeps, "api" | "credentials">,
  token: string,
  username: string,
  label = "",
): Promise<{ ok: boolean; code: string }> {
  if (deps.credentials === null) {
    return { ok: false, code: "webauthn_unavailable" };
  }
  try {
    const options = await deps.api.registerOptions(username, label, token);
    const credential = await deps.credentials.create(toCreateOptions(options));
    await deps.api.registerVerify(attestationToWire(credential), label, token);
    return { ok: true, code: "registered" };
  } catch (error) {
    if (error instanceof ApiError) {
      return { ok: false, code: error.code };
    }
    return { ok: false, code: "ceremony_interrupted" };
  }
}
