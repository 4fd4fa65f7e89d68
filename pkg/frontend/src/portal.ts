/** Login-flow state machine for the captive-portal page.
 *
 * Every view transition is driven by a server response or a credential-API
 * outcome; the controller itself never invents protocol state. The render
 * layer subscribes to state changes and stays dumb.
 */

import { ApiError, type ApiClient } from "./api.js";
import {
  assertionToWire,
  classifyApiErrorCode,
  classifyCeremonyError,
  toGetOptions,
  type CredentialApi,
} from "./webauthn.js";
import type { PortalContext } from "./types.js";

export type PortalMode =
  | "username_form"
  | "discoverable_login"
  | "ceremony_pending"
  | "success"
  | "error_retryable"
  | "error_fatal"
  | "browser_incompatible";

export interface PortalViewState {
  mode: PortalMode;
  messageCode: string;
  fasContextPresent: boolean;
  username: string;
  noUsername: boolean;
  gatewayName: string;
  originalUrl: string;
  /** Link target of the incompatible-browser view's redirect button. */
  redirectUrl: string | null;
  connectedAs: string | null;
}

export interface PortalDeps {
  api: Pick<ApiClient, "authOptions" | "authVerify">;
  /** null when the platform credential API is absent. */
  credentials: CredentialApi | null;
  /** Builds the open-in-real-browser link (OS-specific schemes are
   *  deployment configuration, not protocol). */
  redirectLinkTemplate?: (currentUrl: string) => string;
  currentUrl?: string;
  onChange?: (state: PortalViewState) => void;
}

export class PortalController {
  state: PortalViewState;
  private readonly fasContext: string | null;

  constructor(private readonly deps: PortalDeps, context: PortalContext | null) {
    this.fasContext = context?.ok ? context.fas_context ?? null : null;
    this.state = {
      mode: "username_form",
      messageCode: "",
      fasContextPresent: this.fasContext !== null,
      username: "",
      noUsername: false,
      gatewayName: context?.gateway_name ?? "",
      originalUrl: context?.original_url ?? "",
      redirectUrl: null,
      connectedAs: null,
    };
    if (deps.credentials === null) {
      // incompatible browser: offer a hand-off into a real one
      const template = deps.redirectLinkTemplate ?? ((url: string) => url);
      this.update({
        mode: "browser_incompatible",
        messageCode: "webauthn_unavailable",
        redirectUrl: template(deps.currentUrl ?? ""),
      });
    } else if (this.fasContext === null) {
      this.update({ mode: "error_fatal", messageCode: "no_network_context" });
    }
  }

  private update(patch: Partial<PortalViewState>): void {
    this.state = { ...this.state, ...patch };
    this.deps.onChange?.(this.state);
  }

  setUsername(username: string): void {
    this.update({ username });
  }

  /** The "I don't need a username" toggle: the discoverable view is
   * reachable only through it. */
  setNoUsername(flag: boolean): void {
    if (this.state.mode !== "username_form" && this.state.mode !== "discoverable_login") {
      return;
    }
    this.update({
      noUsername: flag,
      mode: flag ? "discoverable_login" : "username_form",
    });
  }

  /** Run one authentication ceremony against the current form state. */
  async submit(): Promise<void> {
    if (this.deps.credentials === null || this.fasContext === null) {
      return;
    }
    if (this.state.mode !== "username_form" && this.state.mode !== "discoverable_login") {
      return;
    }
    const username = this.state.noUsername ? null : this.state.username.trim();
    if (username !== null && username === "") {
      this.update({ mode: "username_form", messageCode: "username_required" });
      return;
    }
    this.update({ mode: "ceremony_pending", messageCode: "" });

    let assertion;
    try {
      const options = await this.deps.api.authOptions(username, this.fasContext);
      const credential = await this.deps.credentials.get(toGetOptions(options));
      assertion = assertionToWire(credential);
    } catch (error) {
      this.failCeremony(error);
      return;
    }

    try {
      const result = await this.deps.api.authVerify(assertion);
      this.update({ mode: "success", messageCode: "connected", connectedAs: result.username });
    } catch (error) {
      this.failCeremony(error);
    }
  }

  private failCeremony(error: unknown): void {
    if (error instanceof ApiError) {
      const outcome = classifyApiErrorCode(error.code);
      this.update({
        mode: outcome === "fatal" ? "error_fatal" : "error_retryable",
        messageCode: error.code,
      });
      return;
    }
    const outcome = classifyCeremonyError(error);
    this.update({
      mode: outcome === "fatal" ? "error_fatal" : "error_retryable",
      // deliberately unspecific: the retry view shows "Try again" without
      // naming the error
      messageCode: outcome === "fatal" ? "ceremony_unsupported" : "ceremony_interrupted",
    });
  }

  /** The "Try again" affordance of the retryable error view. */
  retry(): void {
    if (this.state.mode !== "error_retryable") {
      return;
    }
    this.update({
      mode: this.state.noUsername ? "discoverable_login" : "username_form",
      messageCode: "",
    });
  }
}
