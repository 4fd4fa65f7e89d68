/** Wire types of the portal JSON API. */

export interface CredentialDescriptorWire {
  type: "public-key";
  id: string; // base64url
}

export interface RequestOptionsWire {
  rpId: string;
  challenge: string; // base64url
  timeout: number;
  allowCredentials: CredentialDescriptorWire[];
  userVerification: string;
}

export interface CreationOptionsWire {
  rp: { id: string; name: string };
  user: { id: string; name: string; displayName: string };
  challenge: string; // base64url
  pubKeyCredParams: { type: "public-key"; alg: number }[];
  timeout: number;
  excludeCredentials: CredentialDescriptorWire[];
  authenticatorSelection: { residentKey: string; userVerification: string };
  attestation: string;
}

export interface AssertionWire {
  id: string;
  rawId: string;
  type: "public-key";
  response: {
    clientDataJSON: string;
    authenticatorData: string;
    signature: string;
    userHandle: string | null;
  };
  clientExtensionResults: Record<string, unknown>;
}

export interface AttestationWire {
  id: string;
  rawId: string;
  type: "public-key";
  response: {
    clientDataJSON: string;
    attestationObject: string;
  };
  clientExtensionResults: Record<string, unknown>;
}

export interface PortalContext {
  ok: boolean;
  reason?: string;
  gateway_name?: string;
  client_ip_masked?: string;
  original_url?: string;
  fas_context?: string;
}

export interface VerifyResult {
  session_id: string;
  username: string;
  expires_at: number;
}

export interface RegisteredCredential {
  username: string;
  credential_id: string;
  discoverable: boolean;
  label: string;
  created_at: number;
  is_admin: boolean;
}

export interface SessionSummary {
  session_id: string;
  state: "authenticated" | "authorized" | "expired" | "revoked";
  created_at: number;
  expires_at: number;
  gateway_name: string;
}

export interface CredentialSummary {
  credential_id: string;
  label: string;
  discoverable: boolean;
  sign_count: number;
  created_at: number;
}

export interface AdminUser {
  username: string;
  display_name: string;
  is_admin: boolean;
  credentials: CredentialSummary[];
  active_sessions: SessionSummary[];
}

export interface RegistrationTokenDoc {
  token: string;
  expires_at: number;
  max_uses: number;
  uses: number;
  qr_payload: string;
  grants_admin: boolean;
}

export interface RoleChangeResult {
  username: string;
  is_admin: boolean;
  renewed_sessions: Record<string, string>;
}
