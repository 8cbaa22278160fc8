//! Hybrid encryption records.
//!
//! An [`EnvelopeItem`] holds a payload sealed with AES-256-GCM under a fresh
//! per-item key. An [`AccessEntry`] carries that key wrapped for one
//! recipient: an ephemeral X25519 agreement with the recipient's wrap key is
//! run through HKDF-SHA256 and the resulting key seals the item key, again
//! with AES-256-GCM.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{PublicKey as XPublicKey, StaticSecret};

use super::identity::{Address, NodeIdentity, WrapKey};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hash::Hash256;

/// AES-256-GCM, 96-bit random nonce, scheme id as associated data.
pub const SYM_SCHEME: &str = "sym-v1";
/// Ephemeral X25519 + HKDF-SHA256 + AES-256-GCM.
pub const WRAP_SCHEME: &str = "wrap-v1";

const NONCE_LEN: usize = 12;
const WRAP_INFO: &[u8] = b"consentchain/wrap-v1";
/// ephemeral public key | nonce | sealed 32-byte key with 16-byte tag
const WRAPPED_KEY_LEN: usize = 32 + NONCE_LEN + 32 + 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("unsupported scheme {0:?}")]
    UnknownScheme(String),
    #[error("authenticated decryption failed")]
    Corrupt,
    #[error("item id does not match ciphertext digest")]
    ItemIdMismatch,
    #[error("recipient wrap key is not usable")]
    WeakWrapKey,
}

/// Symmetric key for a single item. Never written to the chain in the clear.
#[derive(Clone, PartialEq, Eq)]
pub struct ItemKey(pub [u8; 32]);

impl ItemKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        ItemKey(key)
    }
}

impl std::fmt::Debug for ItemKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ItemKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeItem {
    pub scheme_id: String,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub item_id: String,
}

impl EnvelopeItem {
    pub fn item_id_for(ciphertext: &[u8]) -> String {
        Hash256::digest(ciphertext).to_hex()
    }

    /// Seals `plaintext` under a freshly drawn key.
    pub fn seal<R: RngCore + CryptoRng>(rng: &mut R, plaintext: &[u8]) -> (Self, ItemKey) {
        let key = ItemKey::random(rng);
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let cipher = Aes256Gcm::new_from_slice(&key.0).expect("32-byte key");
        let ciphertext = cipher
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: plaintext,
                    aad: SYM_SCHEME.as_bytes(),
                },
            )
            .expect("AES-GCM encryption is infallible for in-memory buffers");
        let item_id = Self::item_id_for(&ciphertext);
        (
            EnvelopeItem {
                scheme_id: SYM_SCHEME.to_owned(),
                nonce,
                ciphertext,
                item_id,
            },
            key,
        )
    }

    pub fn open(&self, key: &ItemKey) -> Result<Vec<u8>, EnvelopeError> {
        if self.scheme_id != SYM_SCHEME {
            return Err(EnvelopeError::UnknownScheme(self.scheme_id.clone()));
        }
        if Self::item_id_for(&self.ciphertext) != self.item_id {
            return Err(EnvelopeError::ItemIdMismatch);
        }
        let cipher = Aes256Gcm::new_from_slice(&key.0).expect("32-byte key");
        cipher
            .decrypt(
                Nonce::from_slice(&self.nonce),
                Payload {
                    msg: &self.ciphertext,
                    aad: self.scheme_id.as_bytes(),
                },
            )
            .map_err(|_| EnvelopeError::Corrupt)
    }
}

impl Canonical for EnvelopeItem {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.scheme_id)
            .raw(&self.nonce)
            .bytes(&self.ciphertext)
            .str(&self.item_id);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(EnvelopeItem {
            scheme_id: dec.string()?,
            nonce: dec.array()?,
            ciphertext: dec.bytes()?.to_vec(),
            item_id: dec.string()?,
        })
    }
}

/// One recipient's wrapped copy of an item key.
///
/// `subject` names the user the payload is about, when there is one; the
/// ledger uses it to refuse entries that bypass consent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEntry {
    pub item_id: String,
    pub recipient: Address,
    pub scheme_id: String,
    pub wrapped_key: Vec<u8>,
    pub subject: Option<String>,
}

impl AccessEntry {
    pub fn wrap<R: RngCore + CryptoRng>(
        rng: &mut R,
        item_id: &str,
        recipient: &Address,
        recipient_key: &WrapKey,
        key: &ItemKey,
        subject: Option<String>,
    ) -> Result<Self, EnvelopeError> {
        let ephemeral = StaticSecret::random_from_rng(&mut *rng);
        let ephemeral_pub = XPublicKey::from(&ephemeral);
        let recipient_pub = XPublicKey::from(recipient_key.0);
        let shared = ephemeral.diffie_hellman(&recipient_pub);
        if !shared.was_contributory() {
            return Err(EnvelopeError::WeakWrapKey);
        }
        let kek = derive_kek(shared.as_bytes(), ephemeral_pub.as_bytes(), &recipient_key.0);

        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let aad = wrap_aad(item_id, recipient);
        let sealed = Aes256Gcm::new_from_slice(&kek)
            .expect("32-byte key")
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &key.0,
                    aad: &aad,
                },
            )
            .expect("AES-GCM encryption is infallible for in-memory buffers");

        let mut wrapped_key = Vec::with_capacity(WRAPPED_KEY_LEN);
        wrapped_key.extend_from_slice(ephemeral_pub.as_bytes());
        wrapped_key.extend_from_slice(&nonce);
        wrapped_key.extend_from_slice(&sealed);
        Ok(AccessEntry {
            item_id: item_id.to_owned(),
            recipient: recipient.clone(),
            scheme_id: WRAP_SCHEME.to_owned(),
            wrapped_key,
            subject,
        })
    }

    pub fn unwrap(&self, identity: &NodeIdentity) -> Result<ItemKey, EnvelopeError> {
        if self.scheme_id != WRAP_SCHEME {
            return Err(EnvelopeError::UnknownScheme(self.scheme_id.clone()));
        }
        if self.wrapped_key.len() != WRAPPED_KEY_LEN {
            return Err(EnvelopeError::Corrupt);
        }
        let mut ephemeral = [0u8; 32];
        ephemeral.copy_from_slice(&self.wrapped_key[..32]);
        let nonce = &self.wrapped_key[32..32 + NONCE_LEN];
        let sealed = &self.wrapped_key[32 + NONCE_LEN..];

        let shared = identity
            .wrap_secret()
            .diffie_hellman(&XPublicKey::from(ephemeral));
        let kek = derive_kek(shared.as_bytes(), &ephemeral, &identity.wrap_key().0);
        let aad = wrap_aad(&self.item_id, &self.recipient);
        let plain = Aes256Gcm::new_from_slice(&kek)
            .expect("32-byte key")
            .decrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: sealed,
                    aad: &aad,
                },
            )
            .map_err(|_| EnvelopeError::Corrupt)?;
        let key: [u8; 32] = plain.try_into().map_err(|_| EnvelopeError::Corrupt)?;
        Ok(ItemKey(key))
    }
}

fn derive_kek(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let mut kek = [0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(WRAP_INFO, &mut kek)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    kek
}

fn wrap_aad(item_id: &str, recipient: &Address) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.str(WRAP_SCHEME).str(item_id).str(recipient.as_str());
    enc.into_bytes()
}

impl Canonical for AccessEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.item_id);
        self.recipient.encode(enc);
        enc.str(&self.scheme_id)
            .bytes(&self.wrapped_key)
            .opt_str(self.subject.as_deref());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(AccessEntry {
            item_id: dec.string()?,
            recipient: Address::decode(dec)?,
            scheme_id: dec.string()?,
            wrapped_key: dec.bytes()?.to_vec(),
            subject: dec.opt_string()?,
        })
    }
}
