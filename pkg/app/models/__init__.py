# Este archivo está vacío intencionalmente para que el directorio sea un paquete de Python. 