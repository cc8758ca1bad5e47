#pragma once

#include <numbers>

namespace nvdeer::constants {

// CODATA 2018, SI units.
inline constexpr double mu0 = 1.25663706212e-6;         // N A^-2
inline constexpr double gamma_e = 1.76085963023e11;     // rad s^-1 T^-1
inline constexpr double hbar = 1.054571817e-34;         // J s
inline constexpr double mu_B = 9.2740100783e-24;        // J T^-1
inline constexpr double mu_n = 5.0507837461e-27;        // J T^-1
inline constexpr double g_free = 2.00231930436;         // |g| of the free electron
inline constexpr double avogadro = 6.02214076e23;       // mol^-1

// Unit conversions used by the spin Hamiltonian (energies in MHz, fields in G).
inline constexpr double mu_B_MHz_per_G = 1.399624;
inline constexpr double mu_n_MHz_per_G = 7.62259e-4;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Conversion factors for the global unit convention (MHz, us, G, nm).
inline constexpr double nm = 1e-9;
inline constexpr double us = 1e-6;
inline constexpr double gauss = 1e-4;  // tesla per gauss

}  // namespace nvdeer::constants
