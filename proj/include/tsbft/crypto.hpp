#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "tsbft/params.hpp"
#include "tsbft/types.hpp"

namespace tsbft {

// sigma: 3f+c+1, tau: 2f+c+1, pi: f+1. The two auth schemes are 1-of-1
// signatures used for client requests and replica-signed evidence.
enum class SchemeTag : std::uint8_t {
  sigma = 1,
  tau = 2,
  pi = 3,
  replica_auth = 4,
  client_auth = 5,
};

const char* scheme_name(SchemeTag tag);
bool is_valid_scheme_tag(std::uint8_t raw);

struct SchemeDescriptor {
  SchemeTag tag = SchemeTag::sigma;
  std::uint32_t threshold = 1;
  std::uint32_t total = 1;
};

struct SigShare {
  SchemeTag scheme = SchemeTag::sigma;
  std::uint32_t signer = 0;
  Digest digest{};
  Digest tag{};

  bool operator==(const SigShare&) const = default;
};

struct ShareEvidence {
  std::uint32_t signer = 0;
  Digest tag{};
  bool operator==(const ShareEvidence&) const = default;
};

struct CombinedSig {
  // Size a succinct pairing-based signature occupies on the wire; used for
  // message accounting since the mock evidence is not succinct.
  static constexpr std::size_t kAccountedSize = 33;

  SchemeTag scheme = SchemeTag::sigma;
  Digest digest{};
  // Sorted by signer, one entry per distinct signer.
  std::vector<ShareEvidence> evidence;

  std::size_t accounted_size() const { return kAccountedSize; }
  // The unique signature value for (scheme, digest). A real threshold BLS
  // signature is unique per message regardless of which k shares were
  // combined; nested signing (tau over tau) signs this value.
  Digest value() const;

  bool operator==(const CombinedSig&) const = default;
};

Digest combined_value(SchemeTag scheme, const Digest& digest);

struct SigningKey {
  SchemeTag scheme = SchemeTag::sigma;
  std::uint32_t signer = 0;
  Digest secret{};
};

class CryptoError : public std::runtime_error {
 public:
  enum class Code { insufficient_shares, mixed_digests };
  CryptoError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// Backend slot: the mock below, or an adapter over a real threshold scheme.
class ThresholdBackend {
 public:
  virtual ~ThresholdBackend() = default;
  virtual Digest share_tag(const SigningKey& key, const Digest& digest) const = 0;
  virtual bool check_tag(SchemeTag scheme, std::uint32_t signer, const Digest& digest,
                         const Digest& tag) const = 0;
};

// Deterministic keyed-hash mock. Each signer's secret derives from the
// cluster seed; a share tag is H(secret || scheme || signer || digest).
class MockThresholdBackend final : public ThresholdBackend {
 public:
  explicit MockThresholdBackend(std::uint64_t seed, std::uint32_t cached_signers = 0);

  Digest secret(SchemeTag scheme, std::uint32_t signer) const;
  Digest share_tag(const SigningKey& key, const Digest& digest) const override;
  bool check_tag(SchemeTag scheme, std::uint32_t signer, const Digest& digest,
                 const Digest& tag) const override;

 private:
  Digest derive(SchemeTag scheme, std::uint32_t signer) const;

  std::uint64_t seed_;
  std::uint32_t cached_signers_;
  // [scheme - 1][signer - 1]
  std::vector<std::vector<Digest>> cache_;
};

// Verification material for one cluster: the scheme descriptors plus the
// backend. Also hands out signing keys, which only the simulator and tests
// (acting as the trusted dealer) should call.
class PublicMaterial {
 public:
  PublicMaterial(const ClusterParams& params, std::uint64_t seed, std::uint32_t max_clients = 1 << 20);
  PublicMaterial(const ClusterParams& params, std::shared_ptr<const ThresholdBackend> backend,
                 std::uint32_t max_clients = 1 << 20);

  const SchemeDescriptor& scheme(SchemeTag tag) const;
  const ThresholdBackend& backend() const { return *backend_; }
  SigningKey signing_key(SchemeTag tag, std::uint32_t signer) const;

 private:
  std::vector<SchemeDescriptor> schemes_;
  std::shared_ptr<const ThresholdBackend> backend_;
};

Digest protocol_hash(Seq seq, View view, BytesView payload);

SigShare sign_share(const PublicMaterial& pub, const SigningKey& key, const Digest& digest);
bool verify_share(const PublicMaterial& pub, const SigShare& share);

// Filters invalid shares, then requires >= k distinct valid signers on one
// digest. Evidence keeps the k lowest signer ids so the output does not
// depend on arrival order or on extra shares.
CombinedSig combine(const PublicMaterial& pub, SchemeTag scheme, std::span<const SigShare> shares);
bool verify_combined(const PublicMaterial& pub, const CombinedSig& sig);

}  // namespace tsbft
