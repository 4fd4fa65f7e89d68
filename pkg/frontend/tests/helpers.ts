/** Shared test doubles: an in-memory transport and a fake credential API. */

import { ApiClient } from "../src/api.js";
import { decode, encode } from "../src/base64url.js";
import type { Scheduler } from "../src/admin.js";

export type Route = (body: unknown) => { status: number; body: unknown };

export class FakeTransport {
  calls: { path: string; body: unknown }[] = [];
  private routes = new Map<string, Route>();

  on(path: string, route: Route): this {
    this.routes.set(path, route);
    return this;
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const path = input.split("?")[0]!;
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ path, body });
    const route = this.routes.get(path);
    if (!route) {
      return new Response(JSON.stringify({ error: "not_found", message: path }), {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    const result = route(body);
    return new Response(JSON.stringify(result.body), {
      status: result.status,
      headers: { "content-type": "application/json" },
    });
  };

  client(): ApiClient {
    return new ApiClient(this.fetch);
  }
}

function buffer(text: string): ArrayBuffer {
  return new TextEncoder().encode(text).buffer as ArrayBuffer;
}

/** A credential API double that replays scripted outcomes. */
export class FakeCredentials {
  getCalls: unknown[] = [];
  createCalls: unknown[] = [];
  private getOutcomes: (unknown | Error)[] = [];
  private createOutcomes: (unknown | Error)[] = [];

  willGet(outcome: unknown | Error): this {
    this.getOutcomes.push(outcome);
    return this;
  }

  willCreate(outcome: unknown | Error): this {
    this.createOutcomes.push(outcome);
    return this;
  }

  async get(options: unknown): Promise<unknown> {
    this.getCalls.push(options);
    const outcome = this.getOutcomes.shift();
    if (outcome instanceof Error) throw outcome;
    if (outcome === undefined) throw new Error("unscripted get()");
    return outcome;
  }

  async create(options: unknown): Promise<unknown> {
    this.createCalls.push(options);
    const outcome = this.createOutcomes.shift();
    if (outcome instanceof Error) throw outcome;
    if (outcome === undefined) throw new Error("unscripted create()");
    return outcome;
  }
}

export function fakeAssertion(userHandle: string | null = "dXNlcg"): unknown {
  return {
    rawId: buffer("credential-id"),
    response: {
      clientDataJSON: buffer('{"type":"webauthn.get"}'),
      authenticatorData: buffer("auth-data"),
      signature: buffer("signature"),
      userHandle: userHandle === null ? null : decode(userHandle).buffer,
    },
    getClientExtensionResults: () => ({}),
  };
}

export function fakeAttestation(): unknown {
  return {
    rawId: buffer("new-credential-id"),
    response: {
      clientDataJSON: buffer('{"type":"webauthn.create"}'),
      attestationObject: buffer("attestation-object"),
    },
    getClientExtensionResults: () => ({ credProps: { rk: true } }),
  };
}

export function domException(name: string): Error {
  const error = new Error(name);
  error.name = name;
  return error;
}

export function requestOptionsWire(allowIds: string[] = []) {
  return {
    rpId: "wawa.example",
    challenge: encode(new TextEncoder().encode("challenge-bytes")),
    timeout: 120000,
    allowCredentials: allowIds.map((id) => ({ type: "public-key" as const, id })),
    userVerification: "preferred",
  };
}

export function creationOptionsWire() {
  return {
    rp: { id: "wawa.example", name: "wawa.example" },
    user: { id: encode(new TextEncoder().encode("user-id-bytes")), name: "alice", displayName: "alice" },
    challenge: encode(new TextEncoder().encode("challenge-bytes")),
    pubKeyCredParams: [{ type: "public-key" as const, alg: -7 }],
    timeout: 120000,
    excludeCredentials: [],
    authenticatorSelection: { residentKey: "preferred", userVerification: "preferred" },
    attestation: "none",
  };
}

/** Manually stepped scheduler standing in for setInterval. */
export class ManualScheduler implements Scheduler {
  ticks: (() => void)[] = [];
  cleared = 0;

  set(callback: () => void, _intervalMs: number): unknown {
    this.ticks.push(callback);
    return this.ticks.length - 1;
  }

  clear(_handle: unknown): void {
    this.cleared += 1;
  }

  /** Fire every registered interval callback once (= one refresh tick). */
  tick(): void {
    for (const callback of this.ticks) callback();
  }
}
