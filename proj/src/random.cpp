#include "nettmle/random.hpp"

namespace nettmle {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ (index + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(stream)), index);
}

}  // namespace nettmle
