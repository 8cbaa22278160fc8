//! Node and user identities: Ed25519 signing keys, X25519 key-wrapping keys,
//! and base58check addresses derived from the signing key.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use ripemd::Ripemd160;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::StaticSecret;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};

/// Version byte prepended to the 160-bit key digest before base58check.
pub const ADDRESS_VERSION: u8 = 0x00;

const SIGN_SEED_DOMAIN: &[u8] = b"consentchain/sign-key/v1";
const WRAP_SEED_DOMAIN: &[u8] = b"consentchain/wrap-key/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("address is not valid base58check: {0}")]
    Encoding(String),
    #[error("address payload has {0} bytes, expected 21")]
    Length(usize),
    #[error("unsupported address version {0:#04x}")]
    Version(u8),
}

/// Checksummed encoding of `RIPEMD160(SHA256(public_key))`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(String);

impl Address {
    pub fn from_public_key(key: &PublicKey) -> Self {
        let sha = Sha256::digest(key.0);
        let rip = Ripemd160::digest(sha);
        let mut payload = Vec::with_capacity(21);
        payload.push(ADDRESS_VERSION);
        payload.extend_from_slice(&rip);
        Address(bs58::encode(payload).with_check().into_string())
    }

    pub fn parse(s: &str) -> Result<Self, AddressError> {
        let payload = bs58::decode(s)
            .with_check(None)
            .into_vec()
            .map_err(|e| AddressError::Encoding(e.to_string()))?;
        if payload.len() != 21 {
            return Err(AddressError::Length(payload.len()));
        }
        if payload[0] != ADDRESS_VERSION {
            return Err(AddressError::Version(payload[0]));
        }
        Ok(Address(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Address {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::parse(s)
    }
}

impl TryFrom<String> for Address {
    type Error = AddressError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Address::parse(&s)
    }
}

impl From<Address> for String {
    fn from(a: Address) -> String {
        a.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.0)
    }
}

impl Canonical for Address {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let s = dec.str()?;
        Address::parse(s).map_err(|e| DecodeError::Invalid(e.to_string()))
    }
}

/// Ed25519 verifying key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify(message, &sig).is_ok()
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(self)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", &self.to_hex()[..12])
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

/// X25519 public key used to wrap symmetric item keys for a recipient.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct WrapKey(pub [u8; 32]);

impl fmt::Debug for WrapKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WrapKey({}..)", hex::encode(&self.0[..6]))
    }
}

/// The public half of an identity, as announced in the `pubkeys` stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicIdentity {
    pub sign_key: PublicKey,
    pub wrap_key: WrapKey,
}

impl PublicIdentity {
    pub fn address(&self) -> Address {
        self.sign_key.address()
    }
}

impl Canonical for PublicIdentity {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.sign_key.0).raw(&self.wrap_key.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PublicIdentity {
            sign_key: PublicKey(dec.array()?),
            wrap_key: WrapKey(dec.array()?),
        })
    }
}

/// A keypair bundle plus its derived address.
#[derive(Clone)]
pub struct NodeIdentity {
    signing: SigningKey,
    wrap_secret: StaticSecret,
    address: Address,
}

impl NodeIdentity {
    /// Deterministic when `seed` is given, otherwise drawn from the OS RNG.
    pub fn generate(seed: Option<&[u8]>) -> Self {
        match seed {
            Some(seed) => {
                let sign: [u8; 32] = Sha256::new()
                    .chain_update(SIGN_SEED_DOMAIN)
                    .chain_update(seed)
                    .finalize()
                    .into();
                let wrap: [u8; 32] = Sha256::new()
                    .chain_update(WRAP_SEED_DOMAIN)
                    .chain_update(seed)
                    .finalize()
                    .into();
                Self::from_secret_parts(sign, wrap)
            }
            None => Self::from_rng(&mut rand::rngs::OsRng),
        }
    }

    pub fn from_rng<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut sign = [0u8; 32];
        let mut wrap = [0u8; 32];
        rng.fill_bytes(&mut sign);
        rng.fill_bytes(&mut wrap);
        Self::from_secret_parts(sign, wrap)
    }

    pub fn from_secret_parts(sign: [u8; 32], wrap: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&sign);
        let wrap_secret = StaticSecret::from(wrap);
        let address = Address::from_public_key(&PublicKey(signing.verifying_key().to_bytes()));
        Self {
            signing,
            wrap_secret,
            address,
        }
    }

    /// 64 bytes: signing secret followed by wrapping secret.
    pub fn secret_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.signing.to_bytes());
        out[32..].copy_from_slice(self.wrap_secret.as_bytes());
        out
    }

    pub fn from_secret_bytes(bytes: &[u8; 64]) -> Self {
        let mut sign = [0u8; 32];
        let mut wrap = [0u8; 32];
        sign.copy_from_slice(&bytes[..32]);
        wrap.copy_from_slice(&bytes[32..]);
        Self::from_secret_parts(sign, wrap)
    }

    pub fn address(&self) -> &Address {
        &self.address
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn wrap_key(&self) -> WrapKey {
        WrapKey(x25519_dalek::PublicKey::from(&self.wrap_secret).to_bytes())
    }

    pub fn public_identity(&self) -> PublicIdentity {
        PublicIdentity {
            sign_key: self.public_key(),
            wrap_key: self.wrap_key(),
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    pub(crate) fn wrap_secret(&self) -> &StaticSecret {
        &self.wrap_secret
    }
}

impl fmt::Debug for NodeIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeIdentity")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}
