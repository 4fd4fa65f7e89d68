/** Entry point: wires controllers to the page the portal server serves.
 *
 * The server embeds the bootstrap context as JSON in #portal-context; the
 * URL decides the surface: ?admin opens the panel, ?regtoken runs the
 * scanned-QR self-registration flow, anything else is the login page.
 */

import { ApiClient } from "./api.js";
import { AdminPanelController, DEFAULT_REFRESH_MS, registerWithToken } from "./admin.js";
import { PortalController } from "./portal.js";
import { renderQrDataUrl } from "./qr.js";
import { renderAdmin, renderPortal } from "./render.js";
import { detectCredentialApi } from "./webauthn.js";
import type { PortalContext } from "./types.js";

function readContext(document: Document): PortalContext | null {
  const node = document.getElementById("portal-context");
  if (!node?.textContent) {
    return null;
  }
  try {
    return JSON.parse(node.textContent) as PortalContext;
  } catch {
    return null;
  }
}

export function boot(win: Window & typeof globalThis): void {
  const document = win.document;
  const root = document.getElementById("portal-root");
  if (!root) {
    return;
  }
  const api = new ApiClient(win.fetch.bind(win));
  const credentials = detectCredentialApi(win);
  const params = new URLSearchParams(win.location.search);

  if (params.has("admin")) {
    const controller = new AdminPanelController({
      api,
      credentials,
      qrRenderer: renderQrDataUrl,
      onChange: (state) => renderAdmin(root, controller, state),
    });
    void controller.refresh();
    controller.startPolling(DEFAULT_REFRESH_MS);
    return;
  }

  const regtoken = params.get("regtoken");
  if (regtoken) {
    root.textContent = "";
    const input = document.createElement("input");
    input.placeholder = "Choose your username";
    const button = document.createElement("button");
    button.textContent = "Register this device";
    const status = document.createElement("p");
    button.addEventListener("click", () => {
      void registerWithToken({ api, credentials }, regtoken, input.value).then(
        (result) => {
          status.textContent = result.ok
            ? "Registered. You can now sign in."
            : `Registration failed (${result.code}).`;
        },
      );
    });
    root.append(input, button, status);
    return;
  }

  const controller = new PortalController(
    {
      api,
      credentials,
      currentUrl: win.location.href,
      onChange: (state) => renderPortal(root, controller, state),
    },
    readContext(document),
  );
  renderPortal(root, controller, controller.state);
}

declare global {
  interface Window {
    __fido2capBooted?: boolean;
  }
}

if (typeof window !== "undefined" && !window.__fido2capBooted) {
  window.__fido2capBooted = true;
  boot(window);
}
