/** QR rendering of registration-token payload URLs. */

import QRCode from "qrcode";

export function renderQrDataUrl(payload: string): Promise<string> {
  return QRCode.toDataURL(payload, { errorCorrectionLevel: "M", margin: 2 });
}
