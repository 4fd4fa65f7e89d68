import { describe, expect, it } from "vitest";

import { AdminPanelController } from "../src/admin.js";
import { renderQrDataUrl } from "../src/qr.js";
import type { AdminUser } from "../src/types.js";
import {
  FakeCredentials,
  FakeTransport,
  ManualScheduler,
  creationOptionsWire,
  fakeAttestation,
} from "./helpers.js";

function userRow(username: string, sessions = 0): AdminUser {
  return {
    username,
    display_name: username,
    is_admin: false,
    credentials: [
      {
        credential_id: "Y3JlZA",
        label: "key",
        discoverable: true,
        sign_count: sessions,
        created_at: 0,
      },
    ],
    active_sessions: Array.from({ length: sessions }, (_, index) => ({
      session_id: `s${index}`,
      state: "authenticated" as const,
      created_at: 0,
      expires_at: 600,
      gateway_name: "gw",
    })),
  };
}

function panel(fake: FakeTransport, credentials = new FakeCredentials()) {
  const scheduler = new ManualScheduler();
  const controller = new AdminPanelController({
    api: fake.client(),
    credentials,
    scheduler,
    qrRenderer: renderQrDataUrl,
  });
  return { controller, scheduler };
}

describe("admin panel", () => {
  it("reflects a new session within one refresh interval", async () => {
    let listing: AdminUser[] = [userRow("alice", 0)];
    const fake = new FakeTransport().on("/api/admin/users", () => ({
      status: 200,
      body: listing,
    }));
    const { controller, scheduler } = panel(fake);

    await controller.refresh();
    expect(controller.state.users[0]!.active_sessions).toHaveLength(0);

    controller.startPolling(2000);
    listing = [userRow("alice", 1)]; // the user authenticates now
    scheduler.tick(); // one refresh interval later...
    await new Promise((resolve) => setTimeout(resolve, 0)); // let it settle
    expect(controller.state.users[0]!.active_sessions).toHaveLength(1);
  });

  it("registers a key through options -> create -> verify and refreshes", async () => {
    const credentials = new FakeCredentials().willCreate(fakeAttestation());
    const fake = new FakeTransport()
      .on("/api/admin/register/options", () => ({ status: 200, body: creationOptionsWire() }))
      .on("/api/admin/register/verify", () => ({
        status: 200,
        body: {
          username: "alice", credential_id: "bmV3", discoverable: true,
          label: "room key", created_at: 0, is_admin: false,
        },
      }))
      .on("/api/admin/users", () => ({ status: 200, body: [userRow("alice")] }));
    const { controller } = panel(fake, credentials);

    const ok = await controller.registerKey("alice", "room key");
    expect(ok).toBe(true);
    expect(controller.state.lastRegistered).toBe("alice");
    expect(credentials.createCalls).toHaveLength(1);
    const paths = fake.calls.map((c) => c.path);
    expect(paths).toEqual([
      "/api/admin/register/options",
      "/api/admin/register/verify",
      "/api/admin/users",
    ]);
  });

  it("pauses polling refreshes during a ceremony", async () => {
    let resolveCreate: (value: unknown) => void = () => undefined;
    const pending = new Promise((resolve) => (resolveCreate = resolve));
    const credentials = new FakeCredentials();
    credentials.create = async () => pending; // hang the prompt
    const fake = new FakeTransport()
      .on("/api/admin/register/options", () => ({ status: 200, body: creationOptionsWire() }))
      .on("/api/admin/register/verify", () => ({
        status: 200,
        body: {
          username: "alice", credential_id: "bmV3", discoverable: true,
          label: "", created_at: 0, is_admin: false,
        },
      }))
      .on("/api/admin/users", () => ({ status: 200, body: [userRow("alice")] }));
    const { controller, scheduler } = panel(fake, credentials);
    controller.startPolling(2000);

    const registration = controller.registerKey("alice");
    await new Promise((resolve) => setTimeout(resolve, 0));
    const callsDuringCeremony = fake.calls.filter((c) => c.path === "/api/admin/users").length;
    scheduler.tick(); // a poll fires mid-ceremony...
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(
      fake.calls.filter((c) => c.path === "/api/admin/users").length,
    ).toBe(callsDuringCeremony); // ...and is suppressed

    resolveCreate(fakeAttestation());
    await registration;
    expect(controller.state.ceremonyPending).toBe(false);
  });

  it("surfaces ceremony cancellation as a retryable code", async () => {
    const credentials = new FakeCredentials();
    credentials.create = async () => {
      const error = new Error("NotAllowedError");
      error.name = "NotAllowedError";
      throw error;
    };
    const fake = new FakeTransport().on("/api/admin/register/options", () => ({
      status: 200,
      body: creationOptionsWire(),
    }));
    const { controller } = panel(fake, credentials);
    const ok = await controller.registerKey("alice");
    expect(ok).toBe(false);
    expect(controller.state.errorCode).toBe("ceremony_interrupted");
  });

  it("issues a token and renders its QR payload", async () => {
    const fake = new FakeTransport().on("/api/admin/regtoken", () => ({
      status: 200,
      body: {
        token: "deadbeef", expires_at: 600, max_uses: 1, uses: 0,
        qr_payload: "https://wawa.example/portal?regtoken=deadbeef",
        grants_admin: false,
      },
    }));
    const { controller } = panel(fake);
    const token = await controller.issueToken(600, 1);
    expect(token?.token).toBe("deadbeef");
    expect(controller.state.tokenQrDataUrl).toMatch(/^data:image\/png;base64,/);
  });

  it("toggles the admin role and refreshes the table", async () => {
    let isAdmin = false;
    const fake = new FakeTransport()
      .on("/api/admin/users/alice/admin", (body) => {
        isAdmin = (body as { is_admin: boolean }).is_admin;
        return { status: 200, body: { username: "alice", is_admin: isAdmin, renewed_sessions: {} } };
      })
      .on("/api/admin/users", () => ({
        status: 200,
        body: [{ ...userRow("alice"), is_admin: isAdmin }],
      }));
    const { controller } = panel(fake);
    await controller.toggleAdmin("alice", true);
    expect(controller.state.users[0]!.is_admin).toBe(true);
  });

  it("redirects to login when the session is not an admin", async () => {
    const fake = new FakeTransport().on("/api/admin/users", () => ({
      status: 403,
      body: { error: "forbidden", message: "admin role required" },
    }));
    const { controller, scheduler } = panel(fake);
    controller.startPolling(2000);
    await controller.refresh();
    expect(controller.state.needsLogin).toBe(true);
    expect(scheduler.cleared).toBeGreaterThan(0); // polling stopped
  });
});
