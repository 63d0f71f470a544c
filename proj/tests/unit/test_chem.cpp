#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bfn/chem/canonical.hpp"
#include "bfn/chem/fingerprint.hpp"
#include "bfn/chem/smiles.hpp"

using namespace bfn::chem;

namespace {

ParseErrorKind error_kind(const std::string& s) {
  try {
    parse_smiles(s);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a parse error for " << s;
  return ParseErrorKind::kEmpty;
}

// Relabels atoms of g by `perm` (new index of old atom i is perm[i]).
MolGraph permute(const MolGraph& g, const std::vector<int>& perm) {
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = static_cast<int>(i);
  MolGraph out;
  for (int k = 0; k < g.atom_count(); ++k) out.add_atom(g.atom(inverse[k]));
  std::vector<int> bonds(g.bond_count());
  std::iota(bonds.begin(), bonds.end(), 0);
  std::reverse(bonds.begin(), bonds.end());
  for (int b : bonds) {
    const Bond& bond = g.bond(b);
    out.add_bond(perm[bond.end], perm[bond.begin], bond.order);
  }
  return out;
}

}  // namespace

TEST(ParseSmiles, Methane) {
  const MolGraph g = parse_smiles("C");
  ASSERT_EQ(g.atom_count(), 1);
  EXPECT_EQ(g.atom(0).element, 6);
  EXPECT_EQ(g.atom(0).hydrogens, 4);
}

TEST(ParseSmiles, Cyclopropane) {
  const MolGraph g = parse_smiles("C1CC1");
  EXPECT_EQ(g.atom_count(), 3);
  ASSERT_EQ(g.bond_count(), 3);
  for (int b = 0; b < 3; ++b) EXPECT_EQ(g.bond(b).order, BondOrder::kSingle);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(g.atom(i).hydrogens, 2);
  EXPECT_EQ(g.ring_count(), 1);
}

TEST(ParseSmiles, ErrorKinds) {
  EXPECT_EQ(error_kind("C("), ParseErrorKind::kUnbalancedParenthesis);
  EXPECT_EQ(error_kind("C)"), ParseErrorKind::kUnbalancedParenthesis);
  EXPECT_EQ(error_kind("C()C"), ParseErrorKind::kUnbalancedParenthesis);
  EXPECT_EQ(error_kind("O=C(=O)=O"), ParseErrorKind::kValence);
  EXPECT_EQ(error_kind("C1CC"), ParseErrorKind::kUnclosedRing);
  EXPECT_EQ(error_kind("CXC"), ParseErrorKind::kLexical);
  EXPECT_EQ(error_kind("C[Zz]"), ParseErrorKind::kLexical);
  EXPECT_EQ(error_kind("cc"), ParseErrorKind::kAromaticity);
  EXPECT_EQ(error_kind("c1cccc1"), ParseErrorKind::kAromaticity);
  EXPECT_EQ(error_kind("C="), ParseErrorKind::kDanglingBond);
  EXPECT_EQ(error_kind("C11"), ParseErrorKind::kBadRingClosure);
  EXPECT_EQ(error_kind("C12CC12"), ParseErrorKind::kBadRingClosure);
  EXPECT_EQ(error_kind(""), ParseErrorKind::kEmpty);
  EXPECT_EQ(error_kind("FF F"), ParseErrorKind::kLexical);
}

TEST(ParseSmiles, GrammarCoverage) {
  for (const char* s :
       {"CCO", "ClCBr", "[NH4+]", "[O-]C=O", "[13CH4]", "C#N", "C(=O)O", "C%10CC%10",
        "C1CC2CCC1C2", "F/C=C/F", "F\\C=C\\F", "C~C", "CC.O", "c1ccccc1", "c1ccncc1",
        "c1cc[nH]c1", "c1ccoc1", "c1ccsc1", "C[C@H](N)C(=O)O", "C[C@@H](O)F", "[Na+].[Cl-]",
        "OP(=O)(O)O", "CS(=O)(=O)C", "[CH3:1]C", "B(C)(C)C", "IC", "C1=CC=CC=C1",
        "c1ccc2ccccc2c1", "O=[N+]([O-])C", "C-C", "c1ccccc1-c1ccccc1", "[se]1cccc1"}) {
    EXPECT_TRUE(is_valid(s)) << s;
  }
}

TEST(IsValid, Examples) {
  EXPECT_TRUE(is_valid("CCO"));
  EXPECT_FALSE(is_valid("C1CC"));
  EXPECT_FALSE(is_valid(""));
  EXPECT_FALSE(is_valid("   "));
  EXPECT_FALSE(is_valid("C(C)(C)(C)(C)C"));
  EXPECT_FALSE(is_valid("O(C)(C)C"));
  EXPECT_TRUE(is_valid("[O+](C)(C)C"));
  EXPECT_FALSE(is_valid("FC=F"));
  EXPECT_TRUE(is_valid("N(=O)(=O)C"));  // pentavalent nitrogen is in the table
  EXPECT_FALSE(is_valid("[CH5]"));
}

TEST(Valence, ChargeShift) {
  EXPECT_EQ(allowed_valences(7, 1).front(), 4);
  EXPECT_EQ(allowed_valences(8, -1).front(), 1);
  EXPECT_EQ(allowed_valences(6, -1).front(), 3);
  EXPECT_EQ(allowed_valences(6, 1).front(), 3);
  EXPECT_EQ(allowed_valences(5, -1).front(), 4);
}

TEST(Aromaticity, KekuleAndAromaticAgree) {
  const MolGraph kek = parse_smiles("C1=CC=CC=C1");
  const MolGraph aro = parse_smiles("c1ccccc1");
  for (int i = 0; i < 6; ++i) {
    EXPECT_TRUE(kek.atom(i).aromatic);
    EXPECT_EQ(kek.atom(i).hydrogens, 1);
  }
  EXPECT_EQ(canonical_smiles(kek), canonical_smiles(aro));
  EXPECT_EQ(canonical_smiles(parse_smiles("C1=CC=CN1")), canonical_smiles(parse_smiles("c1cc[nH]c1")));
}

TEST(Aromaticity, NonAromaticRingsStayKekule) {
  const MolGraph g = parse_smiles("C1=CCC=C1");  // cyclopentadiene, 4 pi electrons
  for (int i = 0; i < g.atom_count(); ++i) EXPECT_FALSE(g.atom(i).aromatic);
  const MolGraph cot = parse_smiles("C1=CC=CC=CC=C1");  // eight-membered, out of range
  for (int i = 0; i < cot.atom_count(); ++i) EXPECT_FALSE(cot.atom(i).aromatic);
}

TEST(Canonical, SameGraphSameString) {
  EXPECT_EQ(canonical_smiles(parse_smiles("OCC")), canonical_smiles(parse_smiles("CCO")));
  EXPECT_EQ(canonical_smiles(parse_smiles("C(C)(C)O")), canonical_smiles(parse_smiles("CC(O)C")));
  EXPECT_NE(canonical_smiles(parse_smiles("CCO")), canonical_smiles(parse_smiles("COC")));
}

TEST(Canonical, Idempotent) {
  for (const char* s : {"CCO", "c1ccccc1O", "CC(=O)Oc1ccccc1C(=O)O", "C1CC2CCC1C2", "[NH4+].[Cl-]",
                        "C%10CCCCC%10", "N#CC=CC(Br)Cl", "c1ccc2ccccc2c1"}) {
    const std::string c = canonical_smiles(parse_smiles(s));
    EXPECT_EQ(canonical_smiles(parse_smiles(c)), c) << s;
    EXPECT_TRUE(is_valid(c)) << c;
  }
}

TEST(Canonical, PermutationInvariance) {
  for (const char* s : {"CC(=O)Oc1ccccc1C(=O)O", "C1CC2CCC1C2", "OCC(N)C(=O)NC1CCCCC1"}) {
    const MolGraph g = parse_smiles(s);
    const std::string reference = canonical_smiles(g);
    std::mt19937_64 rng(17);
    std::vector<int> perm(g.atom_count());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 1000; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      ASSERT_EQ(canonical_smiles(permute(g, perm)), reference) << s << " trial " << trial;
    }
  }
}

TEST(Canonical, ClosureUnderCanonicalization) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> alphabet = {"C", "N", "O", "=", "(", ")", "1", "c", "F", "#"};
  int checked = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 10);
    for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    if (!is_valid(s)) continue;
    ++checked;
    ASSERT_TRUE(is_valid(canonical_smiles(parse_smiles(s)))) << s;
  }
  EXPECT_GT(checked, 100);
}

TEST(Fingerprint, Examples) {
  const auto methane = morgan_fingerprint(parse_smiles("C"));
  const auto ethane = morgan_fingerprint(parse_smiles("CC"));
  EXPECT_DOUBLE_EQ(tanimoto(methane, methane), 1.0);
  EXPECT_LT(tanimoto(methane, ethane), 1.0);
  EXPECT_EQ(methane.width, 1024);
  EXPECT_EQ(methane.radius, 2);
  EXPECT_THROW(morgan_fingerprint(parse_smiles("C"), 2, 0), std::invalid_argument);
  EXPECT_THROW(morgan_fingerprint(parse_smiles("C"), -1, 64), std::invalid_argument);
}

TEST(Fingerprint, RadiusZeroUsesAtomInvariantsOnly) {
  // Both molecules have the same multiset of (element, charge, degree, H) atoms.
  const auto a = morgan_fingerprint(parse_smiles("CC(C)CCO"), 0);
  const auto b = morgan_fingerprint(parse_smiles("OCCC(C)C"), 0);
  EXPECT_EQ(a, b);
  const auto c = morgan_fingerprint(parse_smiles("CCCCCO"), 0);
  EXPECT_NE(a, c);
}

TEST(Fingerprint, IsomorphismInvariant) {
  EXPECT_EQ(morgan_fingerprint(parse_smiles("OCC(N)C")), morgan_fingerprint(parse_smiles("CC(N)CO")));
}

TEST(Tanimoto, Arithmetic) {
  Fingerprint a(64, 0), b(64, 0), c(64, 0), empty1(64, 0), empty2(64, 0);
  for (int bit : {1, 2, 3}) a.set(bit);
  for (int bit : {2, 3, 4}) b.set(bit);
  for (int bit : {10, 11}) c.set(bit);
  EXPECT_DOUBLE_EQ(tanimoto(a, b), 0.5);
  EXPECT_DOUBLE_EQ(tanimoto(b, a), 0.5);
  EXPECT_DOUBLE_EQ(tanimoto(a, c), 0.0);
  EXPECT_DOUBLE_EQ(tanimoto(a, a), 1.0);
  EXPECT_DOUBLE_EQ(tanimoto(empty1, empty2), 1.0);
  EXPECT_THROW(tanimoto(a, Fingerprint(128, 0)), std::invalid_argument);
}

TEST(Tanimoto, SymmetricAndBounded) {
  std::vector<Fingerprint> fps;
  for (const char* s : {"CCO", "c1ccccc1", "CC(=O)O", "N#CC", "OCCN", "C1CCCCC1"}) {
    fps.push_back(morgan_fingerprint(parse_smiles(s)));
  }
  for (const auto& a : fps) {
    for (const auto& b : fps) {
      const double t = tanimoto(a, b);
      EXPECT_EQ(t, tanimoto(b, a));
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
    }
  }
}

TEST(MolGraph, Invariants) {
  MolGraph g;
  g.add_atom({});
  g.add_atom({});
  g.add_bond(0, 1, BondOrder::kSingle);
  EXPECT_THROW(g.add_bond(1, 0, BondOrder::kDouble), GraphError);
  EXPECT_THROW(g.add_bond(0, 0, BondOrder::kSingle), GraphError);
  EXPECT_THROW(g.add_bond(0, 5, BondOrder::kSingle), GraphError);
}
