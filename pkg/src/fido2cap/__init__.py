"""FIDO2 captive-portal network authentication stack.

Components: a WebAuthn relying-party engine (`fido2cap.webauthn`), a
software FIDO2 authenticator (`fido2cap.authenticator`), the OpenNDS-style
FAS codec and Authmon grammar (`fido2cap.fas`), the portal service and its
HTTP API (`fido2cap.wawa`), a simulated enforcement gateway
(`fido2cap.gateway`), and scripted end-to-end scenarios
(`fido2cap.scenario`). The `fido2cap` CLI drives configuration checks,
admin bootstrap, the demo scenario and the server.
"""

__version__ = "0.1.0"
