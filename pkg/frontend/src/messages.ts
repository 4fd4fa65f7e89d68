/** Message-code lookup: the error taxonomy lives server-side, the UI only
 * maps stable codes to copy. Unknown codes fall back to a generic line. */

const MESSAGES: Record<string, string> = {
  connected: "You are connected to the network.",
  username_required: "Enter your username, or choose “I don’t need a username”.",
  ceremony_interrupted: "That didn’t work.",
  ceremony_unsupported: "This browser cannot talk to your security key.",
  webauthn_unavailable:
    "This browser does not support security keys. Open this page in your regular browser to continue.",
  no_network_context:
    "We cannot identify your network session. Reconnect to the network and follow the sign-in prompt.",
  challenge_unknown_or_expired: "The sign-in attempt expired.",
  unknown_credential: "This security key is not registered here.",
  user_presence_missing: "The security key did not confirm your presence.",
  bad_signature: "The security key response could not be verified.",
  counter_regression:
    "This security key looks cloned. Contact the network operator.",
  missing_fas_context:
    "We cannot identify your network session. Reconnect to the network and follow the sign-in prompt.",
  origin_mismatch: "This page is not being served from the expected address.",
  rp_id_mismatch: "This page is not being served from the expected address.",
  forbidden: "You are not allowed to do that.",
  token_expired_or_exhausted: "This registration link has expired or was already used.",
  no_session: "You are not signed in.",
  network_error: "The portal is unreachable. Check your connection.",
};

export function messageFor(code: string): string {
  return MESSAGES[code] ?? "Something went wrong.";
}
