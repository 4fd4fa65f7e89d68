/** Adapter between the API's JSON wire shapes and the browser credential
 * API, plus the coarse error classification the flow needs.
 *
 * Browsers raise inconsistent exception types for the same underlying
 * problem (a disconnected key may surface as UnknownError on one platform
 * and NotReadableError on another), so classification is deliberately
 * coarse: almost everything is retryable without naming the error, and
 * only configuration-level failures are fatal.
 */

import { decode, encode } from "./base64url.js";
import type { AssertionWire, AttestationWire, CreationOptionsWire, RequestOptionsWire } from "./types.js";

/** The slice of the credential API the controllers need. */
export interface CredentialApi {
  create(options: { publicKey: Record<string, unknown> }): Promise<unknown>;
  get(options: { publicKey: Record<string, unknown> }): Promise<unknown>;
}

/** Returns the platform credential API, or null on incompatible browsers
 * (the mini-browser case: the incompatible view must offer a redirect). */
export function detectCredentialApi(win: unknown): CredentialApi | null {
  const w = win as {
    PublicKeyCredential?: unknown;
    navigator?: { credentials?: CredentialApi };
  };
  if (!w || !w.PublicKeyCredential || !w.navigator?.credentials) {
    return null;
  }
  const credentials = w.navigator.credentials;
  return {
    create: (options) => credentials.create(options),
    get: (options) => credentials.get(options),
  };
}

export function toGetOptions(wire: RequestOptionsWire): { publicKey: Record<string, unknown> } {
  return {
    publicKey: {
      rpId: wire.rpId,
      challenge: decode(wire.challenge),
      timeout: wire.timeout,
      allowCredentials: wire.allowCredentials.map((entry) => ({
        type: entry.type,
        id: decode(entry.id),
      })),
      userVerification: wire.userVerification,
    },
  };
}

export function toCreateOptions(wire: CreationOptionsWire): { publicKey: Record<string, unknown> } {
  return {
    publicKey: {
      rp: wire.rp,
      user: {
        id: decode(wire.user.id),
        name: wire.user.name,
        displayName: wire.user.displayName,
      },
      challenge: decode(wire.challenge),
      pubKeyCredParams: wire.pubKeyCredParams,
      timeout: wire.timeout,
      excludeCredentials: wire.excludeCredentials.map((entry) => ({
        type: entry.type,
        id: decode(entry.id),
      })),
      authenticatorSelection: wire.authenticatorSelection,
      attestation: wire.attestation,
    },
  };
}

interface RawCredential {
  rawId: ArrayBuffer;
  response: {
    clientDataJSON: ArrayBuffer;
    authenticatorData?: ArrayBuffer;
    signature?: ArrayBuffer;
    userHandle?: ArrayBuffer | null;
    attestationObject?: ArrayBuffer;
  };
  getClientExtensionResults?: () => Record<string, unknown>;
}

export function assertionToWire(credential: unknown): AssertionWire {
  const raw = credential as RawCredential;
  const userHandle = raw.response.userHandle;
  return {
    id: encode(raw.rawId),
    rawId: encode(raw.rawId),
    type: "public-key",
    response: {
      clientDataJSON: encode(raw.response.clientDataJSON),
      authenticatorData: encode(raw.response.authenticatorData!),
      signature: encode(raw.response.signature!),
      userHandle: userHandle ? encode(userHandle) : null,
    },
    clientExtensionResults: raw.getClientExtensionResults?.() ?? {},
  };
}

export function attestationToWire(credential: unknown): AttestationWire {
  const raw = credential as RawCredential;
  return {
    id: encode(raw.rawId),
    rawId: encode(raw.rawId),
    type: "public-key",
    response: {
      clientDataJSON: encode(raw.response.clientDataJSON),
      attestationObject: encode(raw.response.attestationObject!),
    },
    clientExtensionResults: raw.getClientExtensionResults?.() ?? {},
  };
}

export type CeremonyOutcome = "retryable" | "fatal";

const FATAL_DOM_ERRORS = new Set(["SecurityError", "NotSupportedError"]);

export function classifyCeremonyError(error: unknown): CeremonyOutcome {
  const name = (error as { name?: string })?.name ?? "";
  return FATAL_DOM_ERRORS.has(name) ? "fatal" : "retryable";
}

/** Server error codes that retrying cannot fix. */
const FATAL_API_CODES = new Set([
  "missing_fas_context",
  "origin_mismatch",
  "rp_id_mismatch",
  "counter_regression",
  "forbidden",
]);

export function classifyApiErrorCode(code: string): CeremonyOutcome {
  return FATAL_API_CODES.has(code) ? "fatal" : "retryable";
}
