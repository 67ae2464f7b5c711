#include "tsbft/crypto.hpp"

#include <algorithm>

#include "tsbft/hash.hpp"

namespace tsbft {

const char* scheme_name(SchemeTag tag) {
  switch (tag) {
    case SchemeTag::sigma: return "sigma";
    case SchemeTag::tau: return "tau";
    case SchemeTag::pi: return "pi";
    case SchemeTag::replica_auth: return "replica_auth";
    case SchemeTag::client_auth: return "client_auth";
  }
  return "unknown";
}

bool is_valid_scheme_tag(std::uint8_t raw) { return raw >= 1 && raw <= 5; }

Digest combined_value(SchemeTag scheme, const Digest& digest) {
  return Hasher().raw("tsbft/combined").u8(static_cast<std::uint8_t>(scheme)).digest(digest).finish();
}

Digest CombinedSig::value() const { return combined_value(scheme, digest); }

Digest protocol_hash(Seq seq, View view, BytesView payload) {
  return Hasher().u64(seq).u64(view).blob(payload).finish();
}

// --- mock backend ---------------------------------------------------------

MockThresholdBackend::MockThresholdBackend(std::uint64_t seed, std::uint32_t cached_signers)
    : seed_(seed), cached_signers_(cached_signers) {
  cache_.resize(5);
  for (std::uint8_t s = 1; s <= 5; ++s) {
    auto& row = cache_[s - 1];
    row.reserve(cached_signers_);
    for (std::uint32_t i = 1; i <= cached_signers_; ++i) row.push_back(derive(static_cast<SchemeTag>(s), i));
  }
}

Digest MockThresholdBackend::derive(SchemeTag scheme, std::uint32_t signer) const {
  return Hasher().raw("tsbft/mock-key").u64(seed_).u8(static_cast<std::uint8_t>(scheme)).u32(signer).finish();
}

Digest MockThresholdBackend::secret(SchemeTag scheme, std::uint32_t signer) const {
  auto idx = static_cast<std::size_t>(scheme) - 1;
  if (idx < cache_.size() && signer >= 1 && signer <= cached_signers_) return cache_[idx][signer - 1];
  return derive(scheme, signer);
}

namespace {
Digest mock_tag(const Digest& secret, SchemeTag scheme, std::uint32_t signer, const Digest& digest) {
  return Hasher().digest(secret).u8(static_cast<std::uint8_t>(scheme)).u32(signer).digest(digest).finish();
}
}  // namespace

Digest MockThresholdBackend::share_tag(const SigningKey& key, const Digest& digest) const {
  return mock_tag(key.secret, key.scheme, key.signer, digest);
}

bool MockThresholdBackend::check_tag(SchemeTag scheme, std::uint32_t signer, const Digest& digest,
                                     const Digest& tag) const {
  return mock_tag(secret(scheme, signer), scheme, signer, digest) == tag;
}

// --- public material --------------------------------------------------------

namespace {
std::vector<SchemeDescriptor> make_schemes(const ClusterParams& p, std::uint32_t max_clients) {
  return {
      {SchemeTag::sigma, p.sigma_threshold, p.n},
      {SchemeTag::tau, p.tau_threshold, p.n},
      {SchemeTag::pi, p.pi_threshold, p.n},
      {SchemeTag::replica_auth, 1, p.n},
      {SchemeTag::client_auth, 1, max_clients},
  };
}
}  // namespace

PublicMaterial::PublicMaterial(const ClusterParams& params, std::uint64_t seed, std::uint32_t max_clients)
    : schemes_(make_schemes(params, max_clients)),
      backend_(std::make_shared<MockThresholdBackend>(seed, params.n)) {}

PublicMaterial::PublicMaterial(const ClusterParams& params, std::shared_ptr<const ThresholdBackend> backend,
                               std::uint32_t max_clients)
    : schemes_(make_schemes(params, max_clients)), backend_(std::move(backend)) {}

const SchemeDescriptor& PublicMaterial::scheme(SchemeTag tag) const {
  return schemes_.at(static_cast<std::size_t>(tag) - 1);
}

SigningKey PublicMaterial::signing_key(SchemeTag tag, std::uint32_t signer) const {
  const auto* mock = dynamic_cast<const MockThresholdBackend*>(backend_.get());
  if (mock == nullptr) throw std::logic_error("signing keys are only dealt by the mock backend");
  return SigningKey{tag, signer, mock->secret(tag, signer)};
}

// --- operations ------------------------------------------------------------

SigShare sign_share(const PublicMaterial& pub, const SigningKey& key, const Digest& digest) {
  SigShare s;
  s.scheme = key.scheme;
  s.signer = key.signer;
  s.digest = digest;
  s.tag = pub.backend().share_tag(key, digest);
  return s;
}

bool verify_share(const PublicMaterial& pub, const SigShare& share) {
  if (!is_valid_scheme_tag(static_cast<std::uint8_t>(share.scheme))) return false;
  const auto& desc = pub.scheme(share.scheme);
  if (share.signer < 1 || share.signer > desc.total) return false;
  return pub.backend().check_tag(share.scheme, share.signer, share.digest, share.tag);
}

CombinedSig combine(const PublicMaterial& pub, SchemeTag scheme, std::span<const SigShare> shares) {
  const auto& desc = pub.scheme(scheme);
  std::vector<const SigShare*> valid;
  valid.reserve(shares.size());
  for (const auto& s : shares) {
    if (s.scheme == scheme && verify_share(pub, s)) valid.push_back(&s);
  }
  for (const auto* s : valid) {
    if (s->digest != valid.front()->digest) {
      throw CryptoError(CryptoError::Code::mixed_digests, "shares disagree on digest");
    }
  }
  std::sort(valid.begin(), valid.end(), [](const SigShare* a, const SigShare* b) { return a->signer < b->signer; });
  valid.erase(std::unique(valid.begin(), valid.end(),
                          [](const SigShare* a, const SigShare* b) { return a->signer == b->signer; }),
              valid.end());
  if (valid.size() < desc.threshold) {
    throw CryptoError(CryptoError::Code::insufficient_shares,
                      std::string("need ") + std::to_string(desc.threshold) + " valid " + scheme_name(scheme) +
                          " shares, have " + std::to_string(valid.size()));
  }
  CombinedSig out;
  out.scheme = scheme;
  out.digest = valid.front()->digest;
  out.evidence.reserve(desc.threshold);
  for (std::size_t i = 0; i < desc.threshold; ++i) out.evidence.push_back({valid[i]->signer, valid[i]->tag});
  return out;
}

bool verify_combined(const PublicMaterial& pub, const CombinedSig& sig) {
  if (!is_valid_scheme_tag(static_cast<std::uint8_t>(sig.scheme))) return false;
  const auto& desc = pub.scheme(sig.scheme);
  if (sig.evidence.size() < desc.threshold) return false;
  std::uint32_t prev = 0;
  for (const auto& e : sig.evidence) {
    if (e.signer <= prev || e.signer > desc.total) return false;
    prev = e.signer;
    if (!pub.backend().check_tag(sig.scheme, e.signer, sig.digest, e.tag)) return false;
  }
  return true;
}

}  // namespace tsbft
