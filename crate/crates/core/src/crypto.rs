//! Etuple encryption: `⟨AES-CTR(v), Map(v)⟩`.
//!
//! Plaintexts are serialized to a tagged canonical byte form, encrypted with
//! AES in counter mode under a fresh random 96-bit nonce, and authenticated
//! with a truncated HMAC-SHA256 over nonce, partition id and ciphertext so a
//! corrupted field fails loudly instead of decrypting to garbage.

use std::fmt;
use std::fs;
use std::path::Path;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{KeyIvInit, StreamCipher};
use aes::{Aes128, Aes256};
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::bucketize::{BucketScheme, PartitionId};
use crate::error::{Error, Result};
use crate::value::Value;

type Aes128Ctr = ctr::Ctr32BE<Aes128>;
type Aes256Ctr = ctr::Ctr32BE<Aes256>;
type HmacSha256 = Hmac<Sha256>;

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Bytes an etuple adds on top of the plain value: nonce, type tag, MAC tag
/// and the partition identifier stored beside it.
pub const ETUPLE_OVERHEAD: u64 = (NONCE_LEN + 1 + TAG_LEN + crate::bucketize::ID_WIDTH) as u64;

/// Data-encryption key (AES-128 or AES-256).
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bits)", self.0.len() * 8)
    }
}

impl SecretKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.len() {
            16 | 32 => Ok(Self(bytes.to_vec())),
            n => Err(Error::Crypto(format!(
                "invalid key length {n} bytes (expected 16 or 32)"
            ))),
        }
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = vec![0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes =
            hex::decode(text.trim()).map_err(|e| Error::Crypto(format!("key file: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_hex(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, format!("{}\n", self.to_hex())).map_err(|e| Error::io(path, e))
    }

    fn derive(&self, label: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(label);
        h.update(&self.0);
        h.finalize().into()
    }

    /// Key for the partition identification function.
    pub fn ident_key(&self) -> [u8; 32] {
        self.derive(b"hcloud/ident")
    }
}

/// An encrypted value with its partition identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ETuple {
    pub nonce: [u8; NONCE_LEN],
    /// Ciphertext followed by the MAC tag.
    pub ciphertext: Vec<u8>,
    pub partition_id: PartitionId,
}

impl ETuple {
    /// `hex(nonce):hex(ciphertext)`; the identifier lives in its own field.
    pub fn encode(&self) -> String {
        format!("{}:{}", hex::encode(self.nonce), hex::encode(&self.ciphertext))
    }

    pub fn decode(field: &str, id_field: &str) -> Result<Self> {
        let bad = |why: &str| Error::Crypto(format!("malformed etuple {field:?}: {why}"));
        let (n, c) = field.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let nonce: [u8; NONCE_LEN] = hex::decode(n)
            .map_err(|_| bad("nonce is not hex"))?
            .try_into()
            .map_err(|_| bad("nonce length"))?;
        let ciphertext = hex::decode(c).map_err(|_| bad("ciphertext is not hex"))?;
        Ok(Self {
            nonce,
            ciphertext,
            partition_id: PartitionId::from_hex(id_field)?,
        })
    }

    pub fn byte_width(&self) -> u64 {
        (NONCE_LEN + self.ciphertext.len() + crate::bucketize::ID_WIDTH) as u64
    }
}

fn canonical_bytes(v: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(9);
    match v {
        Value::Int(x) => {
            out.push(1);
            out.extend_from_slice(&x.to_be_bytes());
        }
        Value::Decimal(c) => {
            out.push(2);
            out.extend_from_slice(&c.to_be_bytes());
        }
        Value::Date(d) => {
            out.push(3);
            out.extend_from_slice(&d.to_be_bytes());
        }
        Value::Text(s) => {
            out.push(4);
            out.extend_from_slice(s.as_bytes());
        }
        Value::Real(r) => {
            out.push(5);
            out.extend_from_slice(&r.to_bits().to_be_bytes());
        }
    }
    out
}

fn from_canonical(bytes: &[u8]) -> Result<Value> {
    let bad = || Error::Crypto("plaintext is not a canonical value".into());
    let (tag, body) = bytes.split_first().ok_or_else(bad)?;
    let eight = || -> Result<[u8; 8]> { body.try_into().map_err(|_| bad()) };
    Ok(match tag {
        1 => Value::Int(i64::from_be_bytes(eight()?)),
        2 => Value::Decimal(i64::from_be_bytes(eight()?)),
        3 => Value::Date(i32::from_be_bytes(body.try_into().map_err(|_| bad())?)),
        4 => Value::Text(String::from_utf8(body.to_vec()).map_err(|_| bad())?),
        5 => Value::Real(f64::from_bits(u64::from_be_bytes(eight()?))),
        _ => return Err(bad()),
    })
}

enum BlockKey {
    Aes128([u8; 16]),
    Aes256([u8; 32]),
}

/// Keyed encryptor/decryptor. Holds derived subkeys so per-value calls do not
/// re-derive them.
pub struct Cipher {
    block: BlockKey,
    mac_key: [u8; 32],
}

impl Cipher {
    pub fn new(key: &SecretKey) -> Self {
        let block = match key.0.len() {
            16 => BlockKey::Aes128(key.0.as_slice().try_into().expect("16 bytes")),
            _ => BlockKey::Aes256(key.0.as_slice().try_into().expect("32 bytes")),
        };
        Self {
            block,
            mac_key: key.derive(b"hcloud/mac"),
        }
    }

    fn keystream(&self, nonce: &[u8; NONCE_LEN], buf: &mut [u8]) {
        let mut iv = [0u8; 16];
        iv[..NONCE_LEN].copy_from_slice(nonce);
        let iv = GenericArray::from_slice(&iv);
        match &self.block {
            BlockKey::Aes128(k) => {
                Aes128Ctr::new(GenericArray::from_slice(k), iv).apply_keystream(buf)
            }
            BlockKey::Aes256(k) => {
                Aes256Ctr::new(GenericArray::from_slice(k), iv).apply_keystream(buf)
            }
        }
    }

    fn mac(&self, nonce: &[u8], id: &PartitionId, ct: &[u8]) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.mac_key).expect("any key length");
        mac.update(nonce);
        mac.update(&id.0);
        mac.update(ct);
        mac
    }

    pub fn encrypt_with_nonce(
        &self,
        scheme: &BucketScheme,
        v: &Value,
        nonce: [u8; NONCE_LEN],
    ) -> ETuple {
        let partition_id = scheme.map_value(v);
        let mut ct = canonical_bytes(v);
        self.keystream(&nonce, &mut ct);
        let tag = self.mac(&nonce, &partition_id, &ct).finalize().into_bytes();
        ct.extend_from_slice(&tag[..TAG_LEN]);
        ETuple {
            nonce,
            ciphertext: ct,
            partition_id,
        }
    }

    pub fn encrypt<R: RngCore + ?Sized>(&self, scheme: &BucketScheme, v: &Value, rng: &mut R) -> ETuple {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        self.encrypt_with_nonce(scheme, v, nonce)
    }

    pub fn decrypt(&self, e: &ETuple) -> Result<Value> {
        if e.ciphertext.len() < TAG_LEN + 1 {
            return Err(Error::Crypto("etuple ciphertext truncated".into()));
        }
        let (ct, tag) = e.ciphertext.split_at(e.ciphertext.len() - TAG_LEN);
        self.mac(&e.nonce, &e.partition_id, ct)
            .verify_truncated_left(tag)
            .map_err(|_| Error::Crypto("etuple authentication failed".into()))?;
        let mut pt = ct.to_vec();
        self.keystream(&e.nonce, &mut pt);
        from_canonical(&pt)
    }
}

/// Encrypts one value under a fresh random nonce.
pub fn encrypt_value(key: &SecretKey, scheme: &BucketScheme, v: &Value) -> ETuple {
    Cipher::new(key).encrypt(scheme, v, &mut rand::thread_rng())
}

/// Decrypts an etuple, dropping its identifier.
pub fn decrypt_value(key: &SecretKey, e: &ETuple) -> Result<Value> {
    Cipher::new(key).decrypt(e)
}
