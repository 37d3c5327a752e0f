#pragma once

#include "scap/bytes.hpp"
#include "scap/codec.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <variant>

namespace scap {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kNonceHalfSize = 6;
inline constexpr std::size_t kBoxNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kMaxFrameSize = 1'048'576;
/// Nonce-half counters are 48 bits wide.
inline constexpr std::uint64_t kCounterLimit = std::uint64_t{1} << 48;

using PublicKey = std::array<std::uint8_t, kKeySize>;
using SecretKey = std::array<std::uint8_t, kKeySize>;
using BoxNonce = std::array<std::uint8_t, kBoxNonceSize>;

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

class EntropySource {
public:
  virtual ~EntropySource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint64_t next_u64();
};

/// Operating-system CSPRNG via libsodium. Throws EntropyUnavailable when the
/// library cannot be initialised.
class SystemEntropy final : public EntropySource {
public:
  SystemEntropy();
  void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream for tests and golden vectors. Not for real keys.
class SeededEntropy final : public EntropySource {
public:
  explicit SeededEntropy(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

struct KeyPair {
  SecretKey secret{};
  PublicKey public_key{};
};

/// Clamps the scalar (clear bits 0-2 and 255, set bit 254).
SecretKey clamp_scalar(SecretKey scalar) noexcept;

KeyPair generate_keypair(EntropySource& entropy);

/// Clamps `secret` and computes its public key.
KeyPair keypair_from_secret(const SecretKey& secret);

/// True when the key is the unique encoding of a field element: bit 255
/// clear and the value below 2^255 - 19. X25519 would otherwise treat
/// several encodings as one point, so a flipped bit could go unnoticed.
bool is_canonical_public_key(const PublicKey& key) noexcept;

/// Raw X25519 scalar multiplication. Throws WeakPublicKey when the result is
/// all zero (small-order peer point).
std::array<std::uint8_t, 32> x25519(const SecretKey& scalar, const PublicKey& point);

struct SharedKey {
  std::array<std::uint8_t, kKeySize> bytes{};
  friend bool operator==(const SharedKey&, const SharedKey&) = default;
};

/// X25519 followed by HChaCha20 over an all-zero 16-byte input. Both ends
/// arrive at the same key.
SharedKey derive_shared(const SecretKey& my_secret, const PublicKey& peer_public);

Bytes seal_box(const SharedKey& key, const BoxNonce& nonce, ByteView plaintext);

/// Throws AuthenticationFailure when the tag does not verify.
Bytes open_box(const SharedKey& key, const BoxNonce& nonce, ByteView box);

// ---------------------------------------------------------------------------
// Nonces and frames
// ---------------------------------------------------------------------------

/// One party's 6-byte share of the box nonce, a little-endian 48-bit counter.
class NonceHalf {
public:
  constexpr NonceHalf() = default;
  static NonceHalf from_counter(std::uint64_t value);
  static NonceHalf from_bytes(ByteView six);

  std::uint64_t counter() const noexcept;
  bool is_zero() const noexcept { return counter() == 0; }
  const std::array<std::uint8_t, kNonceHalfSize>& bytes() const noexcept { return bytes_; }

  friend bool operator==(const NonceHalf&, const NonceHalf&) = default;

private:
  std::array<std::uint8_t, kNonceHalfSize> bytes_{};
};

/// client half || server half.
BoxNonce make_box_nonce(const NonceHalf& client_half, const NonceHalf& server_half) noexcept;

struct FirstClientFrame {
  PublicKey client_public{};
  NonceHalf client_half;
  Bytes box;
  friend bool operator==(const FirstClientFrame&, const FirstClientFrame&) = default;
};

struct FollowupClientFrame {
  NonceHalf client_half;
  NonceHalf server_half;
  Bytes box;
  friend bool operator==(const FollowupClientFrame&, const FollowupClientFrame&) = default;
};

struct ServerFrame {
  NonceHalf client_half;
  NonceHalf server_half;
  Bytes box;
  friend bool operator==(const ServerFrame&, const ServerFrame&) = default;
};

using WireMessage = std::variant<FirstClientFrame, FollowupClientFrame, ServerFrame>;

enum class FrameKind { FirstClient, FollowupClient, Server };

FrameKind frame_kind(const WireMessage& wire) noexcept;

/// Byte offset of the box inside the unframed wire message.
std::size_t box_offset(FrameKind kind) noexcept;

/// Concatenates the fixed-width fields and the box (no outer netstring).
Bytes frame_payload(const WireMessage& wire);

/// frame_payload wrapped in one netstring, as sent on the stream.
Bytes frame_encode(const WireMessage& wire);

/// Splits an unframed wire message. Throws TruncatedFrame.
WireMessage frame_split(ByteView payload, FrameKind expecting);

/// Reads exactly one netstring-framed message. Throws TruncatedFrame when the
/// input ends early, FrameTooLarge above 1 MiB and MalformedNetstring for bad
/// syntax or trailing bytes.
WireMessage frame_decode(ByteView framed, FrameKind expecting);

/// Called with every nonce a session seals under.
using SealObserver = std::function<void(const BoxNonce&)>;

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

/// Client side of one connection. Strictly alternates seal/open. Any error
/// closes the session; later calls throw SessionClosed.
class ClientSession {
public:
  ClientSession(const KeyPair& client_keys, const PublicKey& server_public, std::uint64_t counter_start);

  /// Fresh ephemeral keypair and a random counter start.
  static ClientSession create(const PublicKey& server_public, EntropySource& entropy);

  WireMessage seal(const ProtocolMessage& msg);
  ProtocolMessage open(ByteView framed);

  bool handshake_done() const noexcept { return handshake_done_; }
  bool closed() const noexcept { return closed_; }
  const PublicKey& public_key() const noexcept { return keys_.public_key; }
  const SharedKey& shared() const noexcept { return shared_; }
  std::optional<NonceHalf> last_server_half() const noexcept { return last_server_half_; }

  void set_seal_observer(SealObserver observer) { observer_ = std::move(observer); }

private:
  NonceHalf next_half();

  KeyPair keys_;
  SharedKey shared_;
  std::uint64_t counter_;
  std::optional<NonceHalf> last_client_half_;
  std::optional<NonceHalf> last_server_half_;
  bool awaiting_reply_ = false;
  bool handshake_done_ = false;
  bool closed_ = false;
  SealObserver observer_;
};

/// Server side of one connection. The first frame must carry the client's
/// public key and a hello; the key is then fixed for the session.
class ServerSession {
public:
  /// `counter_start` must be nonzero: a zero server half is reserved for the
  /// client's first box.
  ServerSession(const KeyPair& server_keys, std::uint64_t counter_start);

  static ServerSession create(const KeyPair& server_keys, EntropySource& entropy);

  ProtocolMessage open(ByteView framed);
  WireMessage seal(const ProtocolMessage& msg);

  bool closed() const noexcept { return closed_; }
  bool has_client() const noexcept { return client_public_.has_value(); }
  const std::optional<PublicKey>& client_public() const noexcept { return client_public_; }
  /// The frame kind the next open() expects.
  FrameKind expecting() const noexcept { return has_client() ? FrameKind::FollowupClient : FrameKind::FirstClient; }

  void set_seal_observer(SealObserver observer) { observer_ = std::move(observer); }

private:
  ProtocolMessage open_first(ByteView framed);
  ProtocolMessage open_followup(ByteView framed);

  KeyPair keys_;
  std::uint64_t counter_;
  std::optional<PublicKey> client_public_;
  SharedKey shared_;
  std::optional<NonceHalf> last_client_half_;
  std::optional<NonceHalf> last_server_half_;
  bool reply_pending_ = false;
  bool closed_ = false;
  SealObserver observer_;
};

} // namespace scap
