# Este archivo está vacío intencionalmente para que pytest pueda encontrar los módulos de prueba 