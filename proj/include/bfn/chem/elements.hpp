#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace bfn::chem {

// Periodic table symbols indexed by atomic number (index 0 unused).
inline constexpr std::array<std::string_view, 119> kElementSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

inline std::optional<int> atomic_number(std::string_view symbol) {
  for (std::size_t z = 1; z < kElementSymbols.size(); ++z) {
    if (kElementSymbols[z] == symbol) return static_cast<int>(z);
  }
  return std::nullopt;
}

inline std::string_view element_symbol(int z) {
  return (z > 0 && z < static_cast<int>(kElementSymbols.size())) ? kElementSymbols[z] : "*";
}

// Elements that may be written without brackets.
inline bool is_organic_subset(int z) {
  switch (z) {
    case 5: case 6: case 7: case 8: case 9: case 15: case 16: case 17: case 35: case 53:
      return true;
    default:
      return false;
  }
}

// Elements that may carry the aromatic (lowercase) flag.
inline bool is_aromatic_capable(int z) {
  switch (z) {
    case 5: case 6: case 7: case 8: case 15: case 16: case 33: case 34: case 52:
      return true;
    default:
      return false;
  }
}

/// Allowed total valences for an element with the given formal charge,
/// ascending. An empty result means the element is not valence-checked.
///
/// Neutral table: B=3; C,Si=4; N,P,As=3,5; O=2; S,Se,Te=2,4,6; halogens=1; H=1.
/// A charge moves the valence by |charge| along the isoelectronic direction:
/// pnictogens/chalcogens/halogens gain valence with positive charge
/// (N+ = 4, O- = 1), carbon-group atoms lose valence either way (C+ = C- = 3),
/// boron gains valence with negative charge (B- = 4).
inline std::vector<int> allowed_valences(int z, int charge) {
  std::vector<int> base;
  int direction = 0;  // +1: valence += charge, -1: valence -= |charge|, -2: valence -= charge
  switch (z) {
    case 1: base = {1}; direction = -1; break;
    case 5: base = {3}; direction = -2; break;
    case 6: case 14: base = {4}; direction = -1; break;
    case 7: case 15: case 33: base = {3, 5}; direction = +1; break;
    case 8: base = {2}; direction = +1; break;
    case 16: case 34: case 52: base = {2, 4, 6}; direction = +1; break;
    case 9: case 17: case 35: case 53: base = {1}; direction = +1; break;
    default: return {};
  }
  std::vector<int> out;
  for (int v : base) {
    int shifted = v;
    if (direction == +1) shifted = v + charge;
    else if (direction == -1) shifted = v - (charge < 0 ? -charge : charge);
    else shifted = v - charge;
    if (shifted >= 0) out.push_back(shifted);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Smallest allowed valence that is >= used, if any.
inline std::optional<int> target_valence(std::span<const int> allowed, int used) {
  for (int v : allowed) {
    if (v >= used) return v;
  }
  return std::nullopt;
}

}  // namespace bfn::chem
