#include "purex/rng.hpp"

#include <sstream>

#include "purex/errors.hpp"

namespace purex {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::index(std::size_t n) {
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(wide >> 64);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << seed_ << ' ' << engine_;
  return out.str();
}

Rng Rng::deserialize(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  in >> rng.seed_ >> rng.engine_;
  if (in.fail()) throw DataError("corrupt rng state");
  return rng;
}

}  // namespace purex
