/** DOM rendering for the two surfaces. Dumb by design: it draws whatever
 * state the controllers hand it and forwards interactions back. */

import { messageFor } from "./messages.js";
import type { PortalController, PortalViewState } from "./portal.js";
import type { AdminPanelController, AdminState } from "./admin.js";

function el<K extends keyof HTMLElementTagNameMap>(
  document: Document,
  tag: K,
  text?: string,
  attrs?: Record<string, string>,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text) node.textContent = text;
  for (const [key, value] of Object.entries(attrs ?? {})) {
    node.setAttribute(key, value);
  }
  return node;
}

export function renderPortal(
  root: HTMLElement,
  controller: PortalController,
  state: PortalViewState,
): void {
  const document = root.ownerDocument;
  root.replaceChildren();

  switch (state.mode) {
    case "username_form":
    case "discoverable_login": {
      if (state.gatewayName) {
        root.append(el(document, "p", `Network: ${state.gatewayName}`));
      }
      if (state.messageCode) {
        root.append(el(document, "p", messageFor(state.messageCode), { class: "notice" }));
      }
      if (state.mode === "username_form") {
        const input = el(document, "input", undefined, {
          id: "username",
          placeholder: "Username",
          value: state.username,
        });
        input.addEventListener("input", () => controller.setUsername(input.value));
        root.append(input);
      }
      const toggle = el(document, "label");
      const checkbox = el(document, "input", undefined, { type: "checkbox" });
      (checkbox as HTMLInputElement).checked = state.noUsername;
      checkbox.addEventListener("change", () =>
        controller.setNoUsername((checkbox as HTMLInputElement).checked),
      );
      toggle.append(checkbox, document.createTextNode(" I don’t need a username"));
      root.append(toggle);

      const submit = el(document, "button", "Sign in with your security key");
      submit.addEventListener("click", () => void controller.submit());
      root.append(submit);
      break;
    }
    case "ceremony_pending":
      root.append(el(document, "p", "Touch your security key…"));
      break;
    case "success": {
      root.append(el(document, "h2", messageFor("connected")));
      if (state.connectedAs) {
        root.append(el(document, "p", `Signed in as ${state.connectedAs}.`));
      }
      if (state.originalUrl) {
        root.append(
          el(document, "a", "Continue to your page", { href: state.originalUrl }),
        );
      }
      break;
    }
    case "error_retryable": {
      root.append(el(document, "p", messageFor(state.messageCode)));
      const retry = el(document, "button", "Try again");
      retry.addEventListener("click", () => controller.retry());
      root.append(retry);
      break;
    }
    case "error_fatal":
      root.append(el(document, "p", messageFor(state.messageCode)));
      break;
    case "browser_incompatible": {
      root.append(el(document, "p", messageFor("webauthn_unavailable")));
      if (state.redirectUrl) {
        root.append(
          el(document, "a", "Open in browser", {
            href: state.redirectUrl,
            class: "redirect-button",
          }),
        );
      }
      break;
    }
  }
}

export function renderAdmin(
  root: HTMLElement,
  controller: AdminPanelController,
  state: AdminState,
): void {
  const document = root.ownerDocument;
  root.replaceChildren();

  if (state.needsLogin) {
    root.append(el(document, "p", messageFor("forbidden")));
    root.append(el(document, "a", "Go to sign-in", { href: "/portal" }));
    return;
  }
  if (state.errorCode) {
    root.append(el(document, "p", messageFor(state.errorCode), { class: "notice" }));
  }

  const table = el(document, "table");
  const head = el(document, "tr");
  for (const column of ["User", "Devices", "Active sessions", "Admin"]) {
    head.append(el(document, "th", column));
  }
  table.append(head);
  for (const user of state.users) {
    const row = el(document, "tr");
    row.append(el(document, "td", user.username));
    row.append(
      el(document, "td", user.credentials.map((c) => c.label || "unnamed key").join(", ")),
    );
    const live = user.active_sessions.filter(
      (s) => s.state === "authenticated" || s.state === "authorized",
    );
    row.append(el(document, "td", String(live.length)));
    const adminCell = el(document, "td");
    const checkbox = el(document, "input", undefined, { type: "checkbox" });
    (checkbox as HTMLInputElement).checked = user.is_admin;
    checkbox.addEventListener("change", () =>
      void controller.toggleAdmin(user.username, (checkbox as HTMLInputElement).checked),
    );
    adminCell.append(checkbox);
    row.append(adminCell);
    table.append(row);
  }
  root.append(table);

  const registerButton = el(document, "button", "Register a security key");
  registerButton.addEventListener("click", () => {
    const username = (root.querySelector("#new-username") as HTMLInputElement)?.value ?? "";
    const label = (root.querySelector("#new-label") as HTMLInputElement)?.value ?? "";
    void controller.registerKey(username, label);
  });
  root.append(
    el(document, "input", undefined, { id: "new-username", placeholder: "Username" }),
    el(document, "input", undefined, { id: "new-label", placeholder: "Key label" }),
    registerButton,
  );

  const tokenButton = el(document, "button", "New registration token");
  tokenButton.addEventListener("click", () => void controller.issueToken());
  root.append(tokenButton);
  if (state.token) {
    root.append(el(document, "p", `Token link: ${state.token.qr_payload}`));
    if (state.tokenQrDataUrl) {
      root.append(el(document, "img", undefined, { src: state.tokenQrDataUrl, alt: "QR" }));
    }
  }
}
