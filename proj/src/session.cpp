#include "scap/session.hpp"

#include "scap/error.hpp"

#include <sodium.h>

#include <algorithm>

namespace scap {

namespace {

void ensure_sodium()
{
  static const int status = sodium_init();
  if (status < 0) {
    fail(Errc::EntropyUnavailable, "libsodium failed to initialise");
  }
}

std::uint64_t draw_counter_start(EntropySource& entropy)
{
  // Random start in the lower half of the 48-bit space leaves at least
  // 2^47 messages before exhaustion.
  return entropy.next_u64() & ((kCounterLimit >> 1) - 1);
}

template <class F>
decltype(auto) closing_on_error(bool& closed, F&& f)
{
  if (closed) {
    fail(Errc::SessionClosed, "session was closed after an earlier error");
  }
  try {
    return f();
  } catch (...) {
    closed = true;
    throw;
  }
}

} // namespace

// ---------------------------------------------------------------------------

std::uint64_t EntropySource::next_u64()
{
  std::array<std::uint8_t, 8> raw{};
  fill(raw);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    v |= std::uint64_t{raw[i]} << (8 * i);
  }
  return v;
}

SystemEntropy::SystemEntropy() { ensure_sodium(); }

void SystemEntropy::fill(std::span<std::uint8_t> out) { randombytes_buf(out.data(), out.size()); }

void SeededEntropy::fill(std::span<std::uint8_t> out)
{
  for (std::size_t i = 0; i < out.size(); i += 8) {
    auto word = engine_();
    for (std::size_t k = 0; k < 8 && i + k < out.size(); ++k) {
      out[i + k] = static_cast<std::uint8_t>(word >> (8 * k));
    }
  }
}

// ---------------------------------------------------------------------------

SecretKey clamp_scalar(SecretKey scalar) noexcept
{
  scalar[0] &= 248;
  scalar[31] &= 127;
  scalar[31] |= 64;
  return scalar;
}

KeyPair keypair_from_secret(const SecretKey& secret)
{
  ensure_sodium();
  KeyPair pair;
  pair.secret = clamp_scalar(secret);
  if (crypto_scalarmult_curve25519_base(pair.public_key.data(), pair.secret.data()) != 0) {
    fail(Errc::WeakPublicKey, "base point multiplication failed");
  }
  return pair;
}

KeyPair generate_keypair(EntropySource& entropy)
{
  SecretKey secret{};
  entropy.fill(secret);
  return keypair_from_secret(secret);
}

bool is_canonical_public_key(const PublicKey& key) noexcept
{
  if (key[31] & 0x80) {
    return false;
  }
  // 2^255 - 19 little-endian is ed ff .. ff 7f; only the top 19 values of
  // the 255-bit range are non-canonical.
  if (key[31] != 0x7f) {
    return true;
  }
  for (std::size_t i = 30; i >= 1; --i) {
    if (key[i] != 0xff) {
      return true;
    }
  }
  return key[0] < 0xed;
}

std::array<std::uint8_t, 32> x25519(const SecretKey& scalar, const PublicKey& point)
{
  ensure_sodium();
  std::array<std::uint8_t, 32> out{};
  // libsodium refuses points whose product is the all-zero value.
  if (crypto_scalarmult_curve25519(out.data(), scalar.data(), point.data()) != 0) {
    fail(Errc::WeakPublicKey, "peer public key has small order");
  }
  return out;
}

SharedKey derive_shared(const SecretKey& my_secret, const PublicKey& peer_public)
{
  auto raw = x25519(my_secret, peer_public);
  SharedKey key;
  const std::array<std::uint8_t, crypto_core_hchacha20_INPUTBYTES> zero{};
  crypto_core_hchacha20(key.bytes.data(), zero.data(), raw.data(), nullptr);
  sodium_memzero(raw.data(), raw.size());
  return key;
}

Bytes seal_box(const SharedKey& key, const BoxNonce& nonce, ByteView plaintext)
{
  Bytes box(plaintext.size() + kTagSize);
  unsigned long long written = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(box.data(), &written, plaintext.data(), plaintext.size(), nullptr, 0,
                                            nullptr, nonce.data(), key.bytes.data());
  box.resize(static_cast<std::size_t>(written));
  return box;
}

Bytes open_box(const SharedKey& key, const BoxNonce& nonce, ByteView box)
{
  if (box.size() < kTagSize) {
    fail(Errc::AuthenticationFailure, "box shorter than its tag");
  }
  Bytes plain(box.size() - kTagSize);
  unsigned long long written = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(plain.data(), &written, nullptr, box.data(), box.size(), nullptr, 0,
                                                nonce.data(), key.bytes.data()) != 0) {
    fail(Errc::AuthenticationFailure, "box did not verify");
  }
  plain.resize(static_cast<std::size_t>(written));
  return plain;
}

// ---------------------------------------------------------------------------

NonceHalf NonceHalf::from_counter(std::uint64_t value)
{
  if (value >= kCounterLimit) {
    fail(Errc::CounterExhausted, "nonce counter exceeds 48 bits");
  }
  NonceHalf half;
  for (std::size_t i = 0; i < kNonceHalfSize; ++i) {
    half.bytes_[i] = static_cast<std::uint8_t>(value >> (8 * i));
  }
  return half;
}

NonceHalf NonceHalf::from_bytes(ByteView six)
{
  NonceHalf half;
  std::copy_n(six.begin(), kNonceHalfSize, half.bytes_.begin());
  return half;
}

std::uint64_t NonceHalf::counter() const noexcept
{
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < kNonceHalfSize; ++i) {
    v |= std::uint64_t{bytes_[i]} << (8 * i);
  }
  return v;
}

BoxNonce make_box_nonce(const NonceHalf& client_half, const NonceHalf& server_half) noexcept
{
  BoxNonce nonce{};
  std::copy(client_half.bytes().begin(), client_half.bytes().end(), nonce.begin());
  std::copy(server_half.bytes().begin(), server_half.bytes().end(), nonce.begin() + kNonceHalfSize);
  return nonce;
}

FrameKind frame_kind(const WireMessage& wire) noexcept
{
  return static_cast<FrameKind>(wire.index());
}

std::size_t box_offset(FrameKind kind) noexcept
{
  return kind == FrameKind::FirstClient ? kKeySize + kNonceHalfSize : 2 * kNonceHalfSize;
}

Bytes frame_payload(const WireMessage& wire)
{
  Bytes out;
  std::visit(
    [&](const auto& frame) {
      using T = std::decay_t<decltype(frame)>;
      if constexpr (std::is_same_v<T, FirstClientFrame>) {
        append(out, frame.client_public);
        append(out, frame.client_half.bytes());
      } else {
        append(out, frame.client_half.bytes());
        append(out, frame.server_half.bytes());
      }
      append(out, frame.box);
    },
    wire);
  return out;
}

Bytes frame_encode(const WireMessage& wire) { return netstring_encode(frame_payload(wire)); }

WireMessage frame_split(ByteView payload, FrameKind expecting)
{
  auto header = box_offset(expecting);
  if (payload.size() < header + kTagSize) {
    fail(Errc::TruncatedFrame, std::to_string(payload.size()) + " bytes is below the minimum of " +
                                 std::to_string(header + kTagSize));
  }
  auto box = payload.subspan(header);
  switch (expecting) {
    case FrameKind::FirstClient: {
      FirstClientFrame frame;
      std::copy_n(payload.begin(), kKeySize, frame.client_public.begin());
      frame.client_half = NonceHalf::from_bytes(payload.subspan(kKeySize, kNonceHalfSize));
      frame.box.assign(box.begin(), box.end());
      return frame;
    }
    case FrameKind::FollowupClient:
      return FollowupClientFrame{NonceHalf::from_bytes(payload.first(kNonceHalfSize)),
                                 NonceHalf::from_bytes(payload.subspan(kNonceHalfSize, kNonceHalfSize)),
                                 Bytes(box.begin(), box.end())};
    case FrameKind::Server:
      break;
  }
  return ServerFrame{NonceHalf::from_bytes(payload.first(kNonceHalfSize)),
                     NonceHalf::from_bytes(payload.subspan(kNonceHalfSize, kNonceHalfSize)),
                     Bytes(box.begin(), box.end())};
}

WireMessage frame_decode(ByteView framed, FrameKind expecting)
{
  std::size_t digits = 0;
  std::size_t length = 0;
  while (digits < framed.size() && framed[digits] >= '0' && framed[digits] <= '9') {
    length = length * 10 + (framed[digits] - '0');
    if (digits > 0 && framed[0] == '0') {
      fail(Errc::MalformedNetstring, "length has a leading zero");
    }
    if (length > kMaxFrameSize) {
      fail(Errc::FrameTooLarge, "declared frame length exceeds 1 MiB");
    }
    ++digits;
  }
  if (digits == framed.size()) {
    fail(Errc::TruncatedFrame, "stream ended inside the length field");
  }
  if (digits == 0 || framed[digits] != ':') {
    fail(Errc::MalformedNetstring, "frame does not start with '<length>:'");
  }
  auto rest = framed.subspan(digits + 1);
  if (rest.size() < length + 1) {
    fail(Errc::TruncatedFrame, "stream ended inside the frame payload");
  }
  if (rest[length] != ',') {
    fail(Errc::MalformedNetstring, "missing ',' terminator");
  }
  if (rest.size() != length + 1) {
    fail(Errc::MalformedNetstring, "trailing bytes after the frame");
  }
  return frame_split(rest.first(length), expecting);
}

// ---------------------------------------------------------------------------

ClientSession::ClientSession(const KeyPair& client_keys, const PublicKey& server_public, std::uint64_t counter_start)
  : keys_(client_keys), shared_(derive_shared(client_keys.secret, server_public)), counter_(counter_start)
{
  if (counter_start >= kCounterLimit) {
    fail(Errc::CounterExhausted, "counter start exceeds 48 bits");
  }
}

ClientSession ClientSession::create(const PublicKey& server_public, EntropySource& entropy)
{
  auto keys = generate_keypair(entropy);
  return ClientSession(keys, server_public, draw_counter_start(entropy));
}

NonceHalf ClientSession::next_half()
{
  if (counter_ >= kCounterLimit) {
    fail(Errc::CounterExhausted, "client nonce counter exhausted");
  }
  return NonceHalf::from_counter(counter_++);
}

WireMessage ClientSession::seal(const ProtocolMessage& msg)
{
  return closing_on_error(closed_, [&]() -> WireMessage {
    if (awaiting_reply_) {
      fail(Errc::OutOfSequence, "previous request has not been answered");
    }
    if (direction_of(msg) != Direction::ClientToServer) {
      fail(Errc::DirectionMismatch, "clients send H, Q, E or X");
    }
    bool first = !last_client_half_.has_value();
    if (first && !std::holds_alternative<ClientHello>(msg)) {
      fail(Errc::HandshakeIncomplete, "the first message of a session must be a hello");
    }
    auto client_half = next_half();
    auto server_half = first ? NonceHalf{} : *last_server_half_;
    auto nonce = make_box_nonce(client_half, server_half);
    auto box = seal_box(shared_, nonce, message_encode(msg));
    if (observer_) {
      observer_(nonce);
    }
    last_client_half_ = client_half;
    awaiting_reply_ = true;
    if (first) {
      return FirstClientFrame{keys_.public_key, client_half, std::move(box)};
    }
    return FollowupClientFrame{client_half, server_half, std::move(box)};
  });
}

ProtocolMessage ClientSession::open(ByteView framed)
{
  return closing_on_error(closed_, [&]() -> ProtocolMessage {
    if (!awaiting_reply_) {
      fail(Errc::OutOfSequence, "no request is awaiting a reply");
    }
    auto frame = std::get<ServerFrame>(frame_decode(framed, FrameKind::Server));
    if (frame.client_half != *last_client_half_) {
      fail(Errc::MismatchedClientHalf, "reply does not echo the client's last nonce half");
    }
    if (frame.server_half.is_zero() ||
        (last_server_half_ && frame.server_half.counter() <= last_server_half_->counter())) {
      fail(Errc::ReplayedServerHalf, "server nonce half is zero or not increasing");
    }
    auto plain = open_box(shared_, make_box_nonce(frame.client_half, frame.server_half), frame.box);
    auto msg = message_decode(plain, Direction::ServerToClient);
    last_server_half_ = frame.server_half;
    awaiting_reply_ = false;
    handshake_done_ = true;
    return msg;
  });
}

// ---------------------------------------------------------------------------

ServerSession::ServerSession(const KeyPair& server_keys, std::uint64_t counter_start)
  : keys_(server_keys), counter_(counter_start)
{
  if (counter_start == 0 || counter_start >= kCounterLimit) {
    fail(Errc::CounterExhausted, "server counter start must be in [1, 2^48)");
  }
}

ServerSession ServerSession::create(const KeyPair& server_keys, EntropySource& entropy)
{
  return ServerSession(server_keys, draw_counter_start(entropy) + 1);
}

ProtocolMessage ServerSession::open(ByteView framed)
{
  return closing_on_error(closed_, [&]() -> ProtocolMessage {
    if (reply_pending_) {
      fail(Errc::OutOfSequence, "previous request has not been answered");
    }
    auto msg = client_public_ ? open_followup(framed) : open_first(framed);
    reply_pending_ = true;
    return msg;
  });
}

ProtocolMessage ServerSession::open_first(ByteView framed)
{
  auto frame = std::get<FirstClientFrame>(frame_decode(framed, FrameKind::FirstClient));
  if (!is_canonical_public_key(frame.client_public)) {
    fail(Errc::WeakPublicKey, "client public key is not canonically encoded");
  }
  auto shared = derive_shared(keys_.secret, frame.client_public);
  auto plain = open_box(shared, make_box_nonce(frame.client_half, NonceHalf{}), frame.box);
  auto msg = message_decode(plain, Direction::ClientToServer);
  if (!std::holds_alternative<ClientHello>(msg)) {
    fail(Errc::FirstMessageNotHello, "first box carried " + describe(msg));
  }
  client_public_ = frame.client_public;
  shared_ = shared;
  last_client_half_ = frame.client_half;
  return msg;
}

ProtocolMessage ServerSession::open_followup(ByteView framed)
{
  auto frame = std::get<FollowupClientFrame>(frame_decode(framed, FrameKind::FollowupClient));
  if (!last_server_half_ || frame.server_half != *last_server_half_) {
    fail(Errc::StaleServerHalf, "frame does not echo the server's last nonce half");
  }
  if (frame.client_half.counter() <= last_client_half_->counter()) {
    fail(Errc::ReplayedClientHalf, "client nonce half did not increase");
  }
  auto plain = open_box(shared_, make_box_nonce(frame.client_half, frame.server_half), frame.box);
  auto msg = message_decode(plain, Direction::ClientToServer);
  last_client_half_ = frame.client_half;
  return msg;
}

WireMessage ServerSession::seal(const ProtocolMessage& msg)
{
  return closing_on_error(closed_, [&]() -> WireMessage {
    if (!reply_pending_) {
      fail(Errc::NoClientMessageYet, "nothing to reply to");
    }
    if (direction_of(msg) != Direction::ServerToClient) {
      fail(Errc::DirectionMismatch, "servers send O, Z or D");
    }
    if (counter_ >= kCounterLimit) {
      fail(Errc::CounterExhausted, "server nonce counter exhausted");
    }
    auto server_half = NonceHalf::from_counter(counter_++);
    auto nonce = make_box_nonce(*last_client_half_, server_half);
    auto box = seal_box(shared_, nonce, message_encode(msg));
    if (observer_) {
      observer_(nonce);
    }
    last_server_half_ = server_half;
    reply_pending_ = false;
    return ServerFrame{*last_client_half_, server_half, std::move(box)};
  });
}

} // namespace scap
